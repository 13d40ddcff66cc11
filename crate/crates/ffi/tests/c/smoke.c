#include <stdio.h>
#include <string.h>
#include "asyncmst.h"

static int fail(const char *what) {
    const char *e = asyncmst_last_error();
    fprintf(stderr, "%s: %s\n", what, e ? e : "(no message)");
    return 1;
}

int main(void) {
    /* a 4-cycle with a chord; the MST avoids the two heaviest edges */
    size_t us[] = {0, 1, 2, 3, 0};
    size_t vs[] = {1, 2, 3, 0, 2};
    uint64_t ws[] = {1, 5, 2, 9, 3};
    AsyncmstGraph *g = NULL;
    if (asyncmst_graph_new(4, 2, NULL, 5, us, vs, ws, &g) != ASYNCMST_STATUS_OK) return fail("graph");

    AsyncmstReport *r = NULL;
    if (asyncmst_run(g, "pipeline", "reorder", 7, &r) != ASYNCMST_STATUS_OK) return fail("run");
    size_t eu[8], ev[8];
    size_t k = asyncmst_report_edges(r, eu, ev, 8);
    uint64_t total = 0;
    for (size_t i = 0; i < k; i++)
        for (size_t j = 0; j < 5; j++)
            if ((us[j] == eu[i] && vs[j] == ev[i]) || (us[j] == ev[i] && vs[j] == eu[i])) total += ws[j];
    printf("edges=%zu weight=%llu match=%d messages=%llu\n", k, (unsigned long long)total,
           (int)asyncmst_report_oracle_match(r), (unsigned long long)asyncmst_report_total_messages(r));
    if (k != 3 || total != 6 || !asyncmst_report_oracle_match(r)) return 1;

    AsyncmstReport *bad = NULL;
    if (asyncmst_run(g, "nonsense", NULL, 0, &bad) != ASYNCMST_STATUS_CONFIG || bad != NULL) return 1;
    if (strstr(asyncmst_last_error(), "nonsense") == NULL) return 1;

    char *json = asyncmst_report_json(r);
    if (json == NULL || strstr(json, "\"protocol\"") == NULL) return 1;
    asyncmst_string_free(json);
    asyncmst_report_free(r);
    asyncmst_graph_free(g);
    return 0;
}
