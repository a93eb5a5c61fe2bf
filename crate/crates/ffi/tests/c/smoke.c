#include <math.h>
#include <stdio.h>
#include "covert_lab.h"

int main(void) {
  ClConfusion counts = {217, 358, 110, 245, 495, 147};
  ClSdtResult r;
  if (cl_sdt_from_counts(&counts, CL_DENOMINATOR_MODE_INCLUDE_NOT_SURE, &r) != CL_STATUS_OK) return 1;
  printf("d_prime=%.6f beta=%.6f hit=[%.6f,%.6f]\n", r.d_prime, r.beta, r.hit_lo, r.hit_hi);

  ClConfusion empty = {0};
  if (cl_sdt_from_counts(&empty, CL_DENOMINATOR_MODE_INCLUDE_NOT_SURE, &r) != CL_STATUS_NUMERIC) return 2;
  if (cl_last_error() == NULL) return 3;
  if (cl_sdt_from_counts(NULL, CL_DENOMINATOR_MODE_INCLUDE_NOT_SURE, &r) != CL_STATUS_NULL_POINTER) return 4;

  ClWorld *w = NULL;
  if (cl_world_new("n_groups = 6\nseed = 2\n", &w) != CL_STATUS_OK) return 5;
  ClJudgments *j = NULL;
  if (cl_world_simulate(w, NULL, &j) != CL_STATUS_OK) return 6;
  printf("judgments=%zu\n", cl_judgments_len(j));
  cl_judgments_free(j);
  cl_world_free(w);
  return 0;
}
