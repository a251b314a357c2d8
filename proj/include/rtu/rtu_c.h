#ifndef RTU_C_H_
#define RTU_C_H_

/* C interface to the RTU library. Every call returns an rtu_status; on
 * failure rtu_last_error() describes the problem (per thread). Handles are
 * opaque and owned by the caller until freed. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RTU_API __declspec(dllexport)
#else
#define RTU_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rtu_status {
  RTU_OK = 0,
  RTU_ERR_INVALID_ARGUMENT = 1,
  RTU_ERR_SHAPE = 2,
  RTU_ERR_NUMERIC = 3,
  RTU_ERR_CONFIG = 4,
  RTU_ERR_IO = 5,
  RTU_ERR_TOLERANCE = 6,
  RTU_ERR_UNSUPPORTED = 7,
  RTU_ERR_INTERNAL = 8,
  RTU_ERR_BUFFER_TOO_SMALL = 9
} rtu_status;

RTU_API const char* rtu_version(void);
RTU_API const char* rtu_last_error(void);
RTU_API const char* rtu_status_name(rtu_status status);

/* --- experiment configs --- */

typedef struct rtu_config rtu_config;

RTU_API rtu_status rtu_config_parse(const char* text, rtu_config** out);
RTU_API rtu_status rtu_config_load(const char* path, rtu_config** out);
/* kind: predict | control | gradcheck | timing | eigen */
RTU_API rtu_status rtu_config_default(const char* kind, rtu_config** out);
/* key is "section.key", value in config-text form. */
RTU_API rtu_status rtu_config_set(rtu_config* config, const char* key, const char* value);
RTU_API rtu_status rtu_config_set_steps(rtu_config* config, int64_t steps);
/* Writes the canonical text including the terminating NUL. *needed receives
 * the required size; RTU_ERR_BUFFER_TOO_SMALL if cap is short. buf may be
 * NULL when cap is 0. */
RTU_API rtu_status rtu_config_emit(const rtu_config* config, char* buf, size_t cap,
                                   size_t* needed);
RTU_API rtu_status rtu_config_hash(const rtu_config* config, uint64_t* out);
RTU_API void rtu_config_free(rtu_config* config);

/* --- running --- */

typedef struct rtu_run_options {
  const char* output_dir; /* NULL: config value, then $RTU_OUT_ROOT/<name> */
  int has_seed;           /* nonzero: run only `seed` */
  uint64_t seed;
  int quiet;
} rtu_run_options;

/* *exit_code receives the process exit status the run maps to (0 ok, 1 seed
 * failure, 2 config, 3 io). The call itself returns RTU_OK whenever the run
 * was attempted. */
RTU_API rtu_status rtu_run(const rtu_config* config, const rtu_run_options* options,
                           int* exit_code);
RTU_API rtu_status rtu_sweep(const rtu_config* config, const double* lrs, size_t count,
                             const rtu_run_options* options, int* exit_code);

/* --- a single online RTU layer with RTRL traces --- */

typedef struct rtu_layer rtu_layer;

/* activation: identity | relu | tanh */
RTU_API rtu_status rtu_layer_create(size_t n, size_t d, int nonlinear, const char* activation,
                                    uint64_t seed, rtu_layer** out);
/* Advances state and traces; writes the 2n combined output. */
RTU_API rtu_status rtu_layer_step(rtu_layer* layer, const double* x, size_t d, double* h,
                                  size_t h_len);
/* Gradient of (d_h . h_t) w.r.t. all parameters at the current step, in the
 * order nu_log, theta_log, w_c1, w_c2 (column-major). */
RTU_API rtu_status rtu_layer_gradient(const rtu_layer* layer, const double* d_h, size_t h_len,
                                      double* grad, size_t grad_len);
RTU_API rtu_status rtu_layer_parameter_count(const rtu_layer* layer, size_t* out);
RTU_API rtu_status rtu_layer_trace_count(const rtu_layer* layer, size_t* out);
RTU_API rtu_status rtu_layer_reset(rtu_layer* layer);
RTU_API void rtu_layer_free(rtu_layer* layer);

/* mean of (r - 1) - log r with r = exp(logp_new - logp_old). */
RTU_API rtu_status rtu_approx_kl(const double* logp_old, const double* logp_new, size_t count,
                                 double* out);

#ifdef __cplusplus
}
#endif

#endif /* RTU_C_H_ */
