#include <stdio.h>
#include <string.h>
#include "kroma.h"

int main(void) {
    double p = 0, r = 0, f = 0;
    if (kroma_evaluate("s1\tt1\ns2\tt9\n", "s1\tt1\ns2\tt2\n", &p, &r, &f) != KROMA_STATUS_OK) return 1;
    if (p != 0.5 || r != 0.5 || f != 0.5) return 2;

    KromaState *st = NULL;
    if (kroma_state_from_json("{not json", &st) != KROMA_STATUS_INVALID_INPUT) return 3;
    if (kroma_last_error() == NULL || strlen(kroma_last_error()) == 0) return 4;
    if (st != NULL) return 5;
    if (kroma_state_version(NULL, NULL) != KROMA_STATUS_NULL_POINTER) return 6;
    puts("ok");
    return 0;
}
