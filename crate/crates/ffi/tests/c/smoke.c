#include <math.h>
#include <stdio.h>
#include "egotrack.h"

#define CHECK(cond)                                               \
  do {                                                            \
    if (!(cond)) {                                                \
      const char *m = egt_last_error_message();                   \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,     \
              #cond, m ? m : "no message");                       \
      return 1;                                                   \
    }                                                             \
  } while (0)

int main(void) {
  EgtFilterBank *bank = NULL;
  EgtFilterConfig cfg = egt_filter_config_default();
  EgtCamera cam = egt_camera_default();
  const double rot[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const double trans[3] = {0, 0, -0.01};
  double meas[EGT_SIGMA_FLAT_LEN];
  double est[EGT_SIGMA_FLAT_LEN];

  CHECK(egt_filter_bank_new(&cfg, 0.0, &bank) == EGT_STATUS_OK);
  for (int i = 0; i < 7; ++i) {
    meas[3 * i] = 0.0;
    meas[3 * i + 1] = 0.0;
    meas[3 * i + 2] = 2.0;
  }
  meas[3] += 0.1;
  meas[6] -= 0.1;
  CHECK(egt_filter_bank_ingest(bank, meas, 0.0, &cam, NULL) == EGT_STATUS_OK);
  for (int k = 0; k < 10; ++k)
    CHECK(egt_filter_bank_step(bank, 0.02, rot, trans, est) == EGT_STATUS_OK);
  /* The camera moved 0.1 m toward the static object. */
  CHECK(fabs(est[2] - 1.9) < 1e-9);
  CHECK(egt_filter_bank_step(bank, -1.0, rot, trans, est) == EGT_STATUS_INVALID_ARGUMENT);
  CHECK(egt_last_error_message() != NULL);
  egt_filter_bank_free(bank);

  double p = 0.0;
  CHECK(egt_asc_probability(0.0, EGT_INIT_TYPE_NEAR_OPTIMAL, &p) == EGT_STATUS_OK);
  CHECK(fabs(p - 0.8) < 1e-12);
  puts("ok");
  return 0;
}
