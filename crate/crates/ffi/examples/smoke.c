#include <stdio.h>
#include <stdlib.h>
#include "otlab.h"

int main(void) {
    double k0, k1;
    if (otlab_k_ranges(1.0, 1.0, 3, &k0, &k1) != OTLAB_STATUS_OK) return 1;
    printf("k0 %.9f k0_tilde %.9f\n", k0, k1);

    OtlabApriori ap = {3, 8.0, 1.5, 100.0, 1.0, 0.15, 0.5, 1.0, 1.7320508075688772, 0.5};
    OtlabMedium *m1 = NULL, *m2 = NULL;
    OtlabDnMap *d1 = NULL, *d2 = NULL, *diff = NULL;
    if (otlab_medium_homogeneous(1.0, 9, &ap, 1.0, 1.0, &m1) != OTLAB_STATUS_OK) return 2;
    if (otlab_medium_homogeneous(1.0, 9, &ap, 1.2, 1.0, &m2) != OTLAB_STATUS_OK) return 2;
    if (otlab_dn_assemble(m1, &d1) || otlab_dn_assemble(m2, &d2) || otlab_dn_difference(d1, d2, &diff)) return 3;
    size_t n = otlab_dn_size(d1);
    double *buf = malloc(2 * n * n * sizeof(double));
    if (otlab_dn_entries(d1, buf, 2 * n * n) != OTLAB_STATUS_OK) return 4;
    double norm;
    if (otlab_dn_star_norm(diff, 7, &norm) != OTLAB_STATUS_OK) return 5;
    printf("size %zu star %.6e\n", n, norm);

    if (otlab_k_ranges(1.0, 1.0, 2, &k0, &k1) != OTLAB_STATUS_INVALID_ARGUMENT) return 6;
    printf("error: %s\n", otlab_last_error_message());

    free(buf);
    otlab_dn_free(diff);
    otlab_dn_free(d2);
    otlab_dn_free(d1);
    otlab_medium_free(m2);
    otlab_medium_free(m1);
    return 0;
}
