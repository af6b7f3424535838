#include <stdio.h>
#include <string.h>

#include "fdgen.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        FdgenStatus s_ = (call);                                           \
        if (s_ != FDGEN_STATUS_OK) {                                       \
            const char *m_ = fdgen_last_error();                           \
            fprintf(stderr, "%s failed: %d %s\n", #call, (int)s_, m_ ? m_ : ""); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    FdgenEnv *env = NULL;
    FdgenState *state = NULL;
    size_t modes = 0, sd = 0, ad = 0;
    double frac = 0.0;

    CHECK(fdgen_env_new("grasp2d", &env));
    CHECK(fdgen_env_dims(env, &sd, &ad));
    CHECK(fdgen_env_canonical_state(env, "T", &state));
    CHECK(fdgen_env_mode_count(env, state, 64, 64, 32, &modes, &frac));
    printf("version %s, T modes %zu, action dim %zu\n", fdgen_version(), modes, ad);
    if (modes != 3 || ad != 4) return 2;

    if (fdgen_env_new("nowhere", &env) != FDGEN_STATUS_CONFIG) return 3;
    if (strstr(fdgen_last_error(), "nowhere") == NULL) return 4;

    double sup[2] = {-1.0, 1.0}, bw[1] = {1.0}, q[1] = {0.0}, out[1];
    FdgenKde *kde = NULL;
    CHECK(fdgen_kde_new(sup, 2, 1, bw, &kde));
    CHECK(fdgen_kde_log_eval(kde, q, 1, out));
    printf("log q(0) = %.12f\n", out[0]);

    fdgen_kde_free(kde);
    fdgen_state_free(state);
    fdgen_env_free(env);
    return 0;
}
