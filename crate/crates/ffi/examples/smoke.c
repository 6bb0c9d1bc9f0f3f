#include <stdio.h>
#include <string.h>

#include "otfs.h"

static const char *CONFIG =
    "system = \"otfs\"\n"
    "snr_db = [10]\n"
    "[grid]\nm = 2\nn = 2\ndelta_f_hz = 3750\n"
    "[profile]\nkind = \"four-path\"\n"
    "[stopping]\nmin_bit_errors = 10\nmax_frames = 200\nmin_frames = 1\n";

int main(void) {
    OtfsConfig *cfg = NULL;
    if (otfs_config_from_toml(CONFIG, &cfg) != OTFS_STATUS_OK) {
        fprintf(stderr, "config: %s\n", otfs_last_error());
        return 1;
    }
    OtfsRankSummary rank;
    if (otfs_rank(cfg, &rank) != OTFS_STATUS_OK || rank.kappa != 8) {
        return 2;
    }
    OtfsSweep *sweep = NULL;
    if (otfs_run_sweep(cfg, &sweep) != OTFS_STATUS_OK) {
        return 3;
    }
    OtfsSweepPoint p;
    otfs_sweep_point(sweep, 0, &p);
    printf("snr=%g frames=%llu errors=%llu kappa=%llu\n", p.snr_db, (unsigned long long)p.frames,
           (unsigned long long)p.bit_errors, (unsigned long long)rank.kappa);
    otfs_sweep_free(sweep);
    otfs_config_free(cfg);

    OtfsConfig *bad = NULL;
    if (otfs_config_from_toml("system = 1", &bad) != OTFS_STATUS_CONFIG || bad != NULL) {
        return 4;
    }
    return 0;
}
