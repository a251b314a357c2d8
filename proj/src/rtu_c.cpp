#include "rtu/rtu_c.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "rtu/config.hpp"
#include "rtu/mlp.hpp"
#include "rtu/ppo.hpp"
#include "rtu/runner.hpp"
#include "rtu/rtu.hpp"

struct rtu_config {
  rtu::ExperimentConfig cfg;
};

struct rtu_layer {
  explicit rtu_layer(rtu::RtuParams p) : layer(std::move(p)) {}
  rtu::RtuLayer layer;
};

namespace {

thread_local std::string g_last_error;

rtu_status set_error(rtu_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

rtu_status from_code(rtu::ErrorCode c) {
  switch (c) {
    case rtu::ErrorCode::kInvalidArgument: return RTU_ERR_INVALID_ARGUMENT;
    case rtu::ErrorCode::kShape: return RTU_ERR_SHAPE;
    case rtu::ErrorCode::kNumeric: return RTU_ERR_NUMERIC;
    case rtu::ErrorCode::kConfig: return RTU_ERR_CONFIG;
    case rtu::ErrorCode::kIo: return RTU_ERR_IO;
    case rtu::ErrorCode::kTolerance: return RTU_ERR_TOLERANCE;
    case rtu::ErrorCode::kUnsupported: return RTU_ERR_UNSUPPORTED;
    case rtu::ErrorCode::kInternal: return RTU_ERR_INTERNAL;
  }
  return RTU_ERR_INTERNAL;
}

// Runs f, mapping exceptions onto status codes.
template <typename F>
rtu_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return RTU_OK;
  } catch (const rtu::Error& e) {
    return set_error(from_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(RTU_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(RTU_ERR_INTERNAL, e.what());
  }
}

#define RTU_REQUIRE(cond, msg) \
  if (!(cond)) return set_error(RTU_ERR_INVALID_ARGUMENT, msg)

rtu::RunOptions to_options(const rtu_run_options* o) {
  rtu::RunOptions r;
  if (!o) return r;
  if (o->output_dir) r.output_dir = o->output_dir;
  if (o->has_seed) r.seed = o->seed;
  r.quiet = o->quiet != 0;
  return r;
}

}  // namespace

extern "C" {

const char* rtu_version(void) { return rtu::kVersion; }

const char* rtu_last_error(void) { return g_last_error.c_str(); }

const char* rtu_status_name(rtu_status s) {
  switch (s) {
    case RTU_OK: return "ok";
    case RTU_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RTU_ERR_SHAPE: return "shape";
    case RTU_ERR_NUMERIC: return "numeric";
    case RTU_ERR_CONFIG: return "config";
    case RTU_ERR_IO: return "io";
    case RTU_ERR_TOLERANCE: return "tolerance";
    case RTU_ERR_UNSUPPORTED: return "unsupported";
    case RTU_ERR_INTERNAL: return "internal";
    case RTU_ERR_BUFFER_TOO_SMALL: return "buffer_too_small";
  }
  return "unknown";
}

rtu_status rtu_config_parse(const char* text, rtu_config** out) {
  RTU_REQUIRE(text && out, "null argument");
  *out = nullptr;
  return guard([&] { *out = new rtu_config{rtu::parse_config(text)}; });
}

rtu_status rtu_config_load(const char* path, rtu_config** out) {
  RTU_REQUIRE(path && out, "null argument");
  *out = nullptr;
  return guard([&] { *out = new rtu_config{rtu::load_config(path)}; });
}

rtu_status rtu_config_default(const char* kind, rtu_config** out) {
  RTU_REQUIRE(kind && out, "null argument");
  *out = nullptr;
  return guard(
      [&] { *out = new rtu_config{rtu::default_config(rtu::parse_experiment_kind(kind))}; });
}

rtu_status rtu_config_set(rtu_config* config, const char* key, const char* value) {
  RTU_REQUIRE(config && key && value, "null argument");
  return guard([&] { rtu::set_config_value(config->cfg, key, value); });
}

rtu_status rtu_config_set_steps(rtu_config* config, int64_t steps) {
  RTU_REQUIRE(config, "null config");
  return guard([&] { rtu::set_total_steps(config->cfg, steps); });
}

rtu_status rtu_config_emit(const rtu_config* config, char* buf, size_t cap, size_t* needed) {
  RTU_REQUIRE(config && needed, "null argument");
  RTU_REQUIRE(buf || cap == 0, "null buffer with nonzero capacity");
  std::string text;
  const rtu_status s = guard([&] { text = rtu::emit_config(config->cfg); });
  if (s != RTU_OK) return s;
  *needed = text.size() + 1;
  if (cap < *needed)
    return set_error(RTU_ERR_BUFFER_TOO_SMALL,
                     "need " + std::to_string(*needed) + " bytes, got " + std::to_string(cap));
  std::memcpy(buf, text.c_str(), *needed);
  return RTU_OK;
}

rtu_status rtu_config_hash(const rtu_config* config, uint64_t* out) {
  RTU_REQUIRE(config && out, "null argument");
  return guard([&] { *out = rtu::config_hash(config->cfg); });
}

void rtu_config_free(rtu_config* config) { delete config; }

rtu_status rtu_run(const rtu_config* config, const rtu_run_options* options, int* exit_code) {
  RTU_REQUIRE(config && exit_code, "null argument");
  return guard([&] {
    const rtu::RunReport r = rtu::run_experiment(config->cfg, to_options(options));
    *exit_code = r.exit_code;
    if (!r.failure.empty()) g_last_error = r.failure;
  });
}

rtu_status rtu_sweep(const rtu_config* config, const double* lrs, size_t count,
                     const rtu_run_options* options, int* exit_code) {
  RTU_REQUIRE(config && exit_code && (lrs || count == 0), "null argument");
  return guard([&] {
    const rtu::RunReport r =
        rtu::run_sweep(config->cfg, std::vector<double>(lrs, lrs + count), to_options(options));
    *exit_code = r.exit_code;
    if (!r.failure.empty()) g_last_error = r.failure;
  });
}

rtu_status rtu_layer_create(size_t n, size_t d, int nonlinear, const char* activation,
                            uint64_t seed, rtu_layer** out) {
  RTU_REQUIRE(activation && out, "null argument");
  RTU_REQUIRE(n >= 1 && d >= 1, "n and d must be >= 1");
  *out = nullptr;
  rtu::Activation f;
  if (std::strcmp(activation, "identity") == 0) f = rtu::Activation::kIdentity;
  else if (std::strcmp(activation, "relu") == 0) f = rtu::Activation::kRelu;
  else if (std::strcmp(activation, "tanh") == 0) f = rtu::Activation::kTanh;
  else return set_error(RTU_ERR_INVALID_ARGUMENT, std::string("unknown activation ") + activation);
  return guard([&] {
    rtu::Rng rng = rtu::make_rng(seed, rtu::Stream::kInit);
    *out = new rtu_layer(rtu::init_rtu_params(
        n, d, nonlinear ? rtu::Variant::kNonlinear : rtu::Variant::kLinear, f, {}, rng));
  });
}

rtu_status rtu_layer_step(rtu_layer* layer, const double* x, size_t d, double* h, size_t h_len) {
  RTU_REQUIRE(layer && x && h, "null argument");
  const auto& p = layer->layer.params();
  if (d != p.input_size() || h_len != 2 * p.width())
    return set_error(RTU_ERR_SHAPE, "expected d = " + std::to_string(p.input_size()) +
                                        " and h_len = " + std::to_string(2 * p.width()));
  return guard([&] {
    const rtu::Vec out = layer->layer.step(Eigen::Map<const rtu::Vec>(x, d));
    std::memcpy(h, out.data(), h_len * sizeof(double));
  });
}

rtu_status rtu_layer_gradient(const rtu_layer* layer, const double* d_h, size_t h_len,
                              double* grad, size_t grad_len) {
  RTU_REQUIRE(layer && d_h && grad, "null argument");
  const auto& p = layer->layer.params();
  const size_t count = 2 * p.width() + 2 * p.width() * p.input_size();
  if (h_len != 2 * p.width() || grad_len != count)
    return set_error(RTU_ERR_SHAPE, "expected h_len = " + std::to_string(2 * p.width()) +
                                        " and grad_len = " + std::to_string(count));
  return guard([&] {
    const rtu::CreditSignal credit =
        rtu::split_credit(Eigen::Map<const rtu::Vec>(d_h, h_len), layer->layer.state(),
                          p.variant, p.activation);
    rtu::ParamGrad g = rtu::assemble_param_gradient(credit, layer->layer.traces());
    const std::vector<double> flat = rtu::flatten(rtu::tensors(g));
    std::memcpy(grad, flat.data(), count * sizeof(double));
  });
}

rtu_status rtu_layer_parameter_count(const rtu_layer* layer, size_t* out) {
  RTU_REQUIRE(layer && out, "null argument");
  const auto& p = layer->layer.params();
  *out = 2 * p.width() + 2 * p.width() * p.input_size();
  return RTU_OK;
}

rtu_status rtu_layer_trace_count(const rtu_layer* layer, size_t* out) {
  RTU_REQUIRE(layer && out, "null argument");
  *out = layer->layer.traces().scalar_count();
  return RTU_OK;
}

rtu_status rtu_layer_reset(rtu_layer* layer) {
  RTU_REQUIRE(layer, "null layer");
  return guard([&] { layer->layer.reset(); });
}

void rtu_layer_free(rtu_layer* layer) { delete layer; }

rtu_status rtu_approx_kl(const double* logp_old, const double* logp_new, size_t count,
                         double* out) {
  RTU_REQUIRE(logp_old && logp_new && out, "null argument");
  RTU_REQUIRE(count > 0, "count must be > 0");
  return guard([&] {
    *out = rtu::approx_kl(std::vector<double>(logp_old, logp_old + count),
                          std::vector<double>(logp_new, logp_new + count));
  });
}

}  // extern "C"
