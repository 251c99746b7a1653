#include <stdio.h>
#include <string.h>

#include "byzsim.h"

static const char *CONFIG =
    "{\"objective\": {\"kind\": \"quadratic\", \"a\": [[2, 1], [1, 2]]},"
    " \"noise\": {\"kind\": \"gaussian\", \"sigma\": 0},"
    " \"start\": [1, 1], \"workers\": 4, \"method\": {\"kind\": \"sgd\"},"
    " \"aggregator\": {\"kind\": \"mean\"}, \"lr\": {\"kind\": \"fixed\", \"eta\": 0.25},"
    " \"horizon\": 30}";

int main(void) {
    ByzsimConfig *cfg = NULL;
    ByzsimTrace *trace = NULL;
    ByzsimRound round;
    double msgs[6] = {1, 10, 2, 20, 100, -5};
    double out[2];
    double gap;

    if (byzsim_config_from_json(CONFIG, &cfg) != BYZSIM_STATUS_OK) return 1;
    if (byzsim_run(cfg, &trace) != BYZSIM_STATUS_OK) return 2;
    if (byzsim_trace_len(trace) != 30) return 3;
    if (byzsim_trace_round(trace, 29, &round) != BYZSIM_STATUS_OK || round.t != 30) return 4;
    if (byzsim_trace_final_gap(trace, &gap) != BYZSIM_STATUS_OK || !(gap < 1e-6)) return 5;
    if (byzsim_aggregate("{\"kind\":\"cwmed\"}", msgs, 3, 2, out) != BYZSIM_STATUS_OK) return 6;
    if (out[0] != 2.0 || out[1] != 10.0) return 7;
    if (byzsim_trace_round(trace, 30, &round) != BYZSIM_STATUS_INVALID_ARGUMENT) return 8;
    if (strstr(byzsim_last_error_message(), "out of range") == NULL) return 9;
    byzsim_trace_free(trace);
    byzsim_config_free(cfg);
    printf("ok\n");
    return 0;
}
