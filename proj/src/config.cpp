#include "rtu/config.hpp"

#include <algorithm>
#include <charconv>
#include <climits>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

namespace rtu {

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kPredict: return "predict";
    case ExperimentKind::kControl: return "control";
    case ExperimentKind::kGradcheck: return "gradcheck";
    case ExperimentKind::kTiming: return "timing";
    case ExperimentKind::kEigen: return "eigen";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::kPredict, ExperimentKind::kControl,
                 ExperimentKind::kGradcheck, ExperimentKind::kTiming,
                 ExperimentKind::kEigen})
    if (to_string(k) == s) return k;
  fail(ErrorCode::kConfig, "unknown experiment kind '" + s + "'");
}

namespace {

std::string join_issues(const std::vector<ConfigIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += "\n";
    out += i.line > 0 ? "line " + std::to_string(i.line) + ": " + i.message : i.message;
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : Error(ErrorCode::kConfig, join_issues(issues)), issues_(std::move(issues)) {}

namespace {

constexpr unsigned kPredict = 1u << 0;
constexpr unsigned kControl = 1u << 1;
constexpr unsigned kGradcheck = 1u << 2;
constexpr unsigned kTiming = 1u << 3;
constexpr unsigned kEigen = 1u << 4;
constexpr unsigned kAll = 0x1f;

unsigned kind_bit(ExperimentKind k) { return 1u << static_cast<unsigned>(k); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::optional<T> parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::vector<std::string>> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) return std::nullopt;
    out.push_back(item);
  }
  return out;
}

std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (int x : xs) out += (out.empty() ? "" : ", ") + std::to_string(x);
  return out;
}

std::optional<std::string> parse_ints(const std::string& s, std::vector<int>& to,
                                      bool allow_empty) {
  if (allow_empty && s.empty()) {
    to.clear();
    return std::nullopt;
  }
  auto items = split_list(s);
  if (!items) return "expected a comma-separated list of integers, got '" + s + "'";
  std::vector<int> xs;
  for (const auto& item : *items) {
    auto x = parse_number<int>(item);
    if (!x) return "expected an integer, got '" + item + "'";
    xs.push_back(*x);
  }
  to = xs;
  return std::nullopt;
}

// Returns an error message or nullopt.
using Setter = std::function<std::optional<std::string>(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Binding {
  std::string section;
  std::string key;
  unsigned kinds;
  Getter get;
  Setter set;
};

template <typename T, typename Ref>
Binding number(const char* section, const char* key, unsigned kinds, Ref ref) {
  return {section, key, kinds,
          [ref](const ExperimentConfig& c) {
            const T v = ref(const_cast<ExperimentConfig&>(c));
            if constexpr (std::is_floating_point_v<T>)
              return format_double(v);
            else
              return std::to_string(v);
          },
          [ref](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
            auto v = parse_number<T>(s);
            if (!v)
              return std::string(std::is_floating_point_v<T> ? "expected a real number"
                                                             : "expected an integer") +
                     ", got '" + s + "'";
            ref(c) = *v;
            return std::nullopt;
          }};
}

template <typename Ref>
Binding boolean(const char* section, const char* key, unsigned kinds, Ref ref) {
  return {section, key, kinds,
          [ref](const ExperimentConfig& c) {
            return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          },
          [ref](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
            if (s == "true") ref(c) = true;
            else if (s == "false") ref(c) = false;
            else return "expected true or false, got '" + s + "'";
            return std::nullopt;
          }};
}

// Enumerations are bound through their to_string over the listed values.
template <typename E, typename Ref>
Binding enumeration(const char* section, const char* key, unsigned kinds, Ref ref,
                    std::vector<E> values) {
  return {section, key, kinds,
          [ref](const ExperimentConfig& c) {
            return std::string(to_string(ref(const_cast<ExperimentConfig&>(c))));
          },
          [ref, values](ExperimentConfig& c, const std::string& s) -> std::optional<std::string> {
            std::string names;
            for (E v : values) {
              if (std::string(to_string(v)) == s) {
                ref(c) = v;
                return std::nullopt;
              }
              names += (names.empty() ? "" : ", ") + std::string(to_string(v));
            }
            return "expected one of " + names + ", got '" + s + "'";
          }};
}

const std::vector<Binding>& registry() {
  using C = ExperimentConfig;
  static const std::vector<Binding> b = [] {
    std::vector<Binding> v;
    // [experiment]
    v.push_back(enumeration("experiment", "kind", kAll, [](C& c) -> auto& { return c.kind; },
                            std::vector{ExperimentKind::kPredict, ExperimentKind::kControl,
                                        ExperimentKind::kGradcheck, ExperimentKind::kTiming,
                                        ExperimentKind::kEigen}));
    v.push_back({"experiment", "name", kAll, [](const C& c) { return c.name; },
                 [](C& c, const std::string& s) -> std::optional<std::string> {
                   c.name = s;
                   return std::nullopt;
                 }});
    v.push_back({"experiment", "seeds", kAll,
                 [](const C& c) {
                   std::string out;
                   for (auto s : c.seeds) out += (out.empty() ? "" : ", ") + std::to_string(s);
                   return out;
                 },
                 [](C& c, const std::string& s) -> std::optional<std::string> {
                   // Comma list; "a-b" expands to an inclusive range.
                   auto items = split_list(s);
                   if (!items) return "expected a comma-separated list of seeds, got '" + s + "'";
                   std::vector<std::uint64_t> seeds;
                   for (const auto& item : *items) {
                     const auto dash = item.find('-');
                     if (dash == std::string::npos) {
                       auto x = parse_number<std::uint64_t>(item);
                       if (!x) return "expected an unsigned integer seed, got '" + item + "'";
                       seeds.push_back(*x);
                       continue;
                     }
                     auto lo = parse_number<std::uint64_t>(trim(item.substr(0, dash)));
                     auto hi = parse_number<std::uint64_t>(trim(item.substr(dash + 1)));
                     if (!lo || !hi || *hi < *lo || *hi - *lo > 100000)
                       return "bad seed range '" + item + "'";
                     for (auto x = *lo; x <= *hi; ++x) seeds.push_back(x);
                   }
                   c.seeds = seeds;
                   return std::nullopt;
                 }});
    v.push_back({"experiment", "output_dir", kAll, [](const C& c) { return c.output_dir; },
                 [](C& c, const std::string& s) -> std::optional<std::string> {
                   c.output_dir = s;
                   return std::nullopt;
                 }});

    // Prediction.
    v.push_back(enumeration("architecture", "architecture", kPredict,
                            [](C& c) -> auto& { return c.predict.recurrent.architecture; },
                            std::vector{Architecture::kRtuLinear, Architecture::kRtuNonlinear,
                                        Architecture::kLru, Architecture::kBlockDiag}));
    v.push_back(number<int>("architecture", "n", kPredict,
                            [](C& c) -> auto& { return c.predict.recurrent.n; }));
    v.push_back(enumeration("architecture", "activation", kPredict,
                            [](C& c) -> auto& { return c.predict.recurrent.activation; },
                            std::vector{Activation::kIdentity, Activation::kRelu, Activation::kTanh}));
    v.push_back(enumeration("architecture", "r_param", kPredict,
                            [](C& c) -> auto& { return c.predict.recurrent.r_param; },
                            std::vector{RParam::kExpExp, RParam::kDirect, RParam::kExp,
                                        RParam::kSigmoid}));
    v.push_back(enumeration("architecture", "theta_param", kPredict,
                            [](C& c) -> auto& { return c.predict.recurrent.theta_param; },
                            std::vector{ThetaParam::kLog, ThetaParam::kDirect}));
    v.push_back(number<double>("architecture", "r_min", kPredict,
                               [](C& c) -> auto& { return c.predict.recurrent.init.r_min; }));
    v.push_back(number<double>("architecture", "r_max", kPredict,
                               [](C& c) -> auto& { return c.predict.recurrent.init.r_max; }));
    v.push_back(number<double>("architecture", "max_phase", kPredict,
                               [](C& c) -> auto& { return c.predict.recurrent.init.max_phase; }));
    v.push_back(enumeration("architecture", "mode", kPredict,
                            [](C& c) -> auto& { return c.predict.recurrent.mode; },
                            std::vector{LearningMode::kRtrl, LearningMode::kTbptt}));
    v.push_back(number<int>("architecture", "truncation", kPredict,
                            [](C& c) -> auto& { return c.predict.recurrent.truncation; }));

    v.push_back(number<int>("environment", "isi_min", kPredict,
                            [](C& c) -> auto& { return c.predict.env.isi_min; }));
    v.push_back(number<int>("environment", "isi_max", kPredict,
                            [](C& c) -> auto& { return c.predict.env.isi_max; }));
    v.push_back(number<int>("environment", "cs_duration", kPredict,
                            [](C& c) -> auto& { return c.predict.env.cs_duration; }));
    v.push_back(number<int>("environment", "us_duration", kPredict,
                            [](C& c) -> auto& { return c.predict.env.us_duration; }));
    v.push_back(number<int>("environment", "num_distractors", kPredict,
                            [](C& c) -> auto& { return c.predict.env.num_distractors; }));
    v.push_back(number<double>("environment", "distractor_rate", kPredict,
                               [](C& c) -> auto& { return c.predict.env.distractor_rate; }));
    v.push_back(number<int>("environment", "iti_min", kPredict,
                            [](C& c) -> auto& { return c.predict.env.iti_min; }));
    v.push_back(number<int>("environment", "iti_max", kPredict,
                            [](C& c) -> auto& { return c.predict.env.iti_max; }));
    v.push_back(number<double>("environment", "discount_gamma", kPredict,
                               [](C& c) -> auto& { return c.predict.env.discount_gamma; }));

    v.push_back(number<double>("optimizer", "lr", kPredict,
                               [](C& c) -> auto& { return c.predict.adam.lr; }));
    v.push_back(number<double>("optimizer", "beta1", kPredict,
                               [](C& c) -> auto& { return c.predict.adam.beta1; }));
    v.push_back(number<double>("optimizer", "beta2", kPredict,
                               [](C& c) -> auto& { return c.predict.adam.beta2; }));
    v.push_back(number<double>("optimizer", "eps", kPredict,
                               [](C& c) -> auto& { return c.predict.adam.eps; }));

    v.push_back(enumeration("predict", "target", kPredict,
                            [](C& c) -> auto& { return c.predict.target; },
                            std::vector{TargetMode::kTd, TargetMode::kMonteCarlo}));
    v.push_back(number<std::int64_t>("predict", "steps", kPredict,
                                     [](C& c) -> auto& { return c.predict.steps; }));
    v.push_back(number<int>("predict", "msre_window", kPredict,
                            [](C& c) -> auto& { return c.predict.msre_window; }));
    v.push_back(number<int>("predict", "log_every", kPredict,
                            [](C& c) -> auto& { return c.predict.log_every; }));
    v.push_back(number<double>("predict", "divergence_threshold", kPredict,
                               [](C& c) -> auto& { return c.predict.divergence_threshold; }));

    // Control.
    v.push_back({"environment", "name", kControl, [](const C& c) { return c.control_env.name; },
                 [](C& c, const std::string& s) -> std::optional<std::string> {
                   if (s != "cartpole" && s != "tmaze")
                     return "expected one of cartpole, tmaze, got '" + s + "'";
                   c.control_env.name = s;
                   return std::nullopt;
                 }});
    v.push_back(enumeration("environment", "mask", kControl,
                            [](C& c) -> auto& { return c.control_env.mask; },
                            std::vector{CartpoleMask::kFull, CartpoleMask::kPositionsOnly,
                                        CartpoleMask::kVelocitiesOnly}));
    v.push_back(number<int>("environment", "corridor_length", kControl,
                            [](C& c) -> auto& { return c.control_env.corridor_length; }));

    v.push_back(number<int>("ppo", "buffer_size", kControl,
                            [](C& c) -> auto& { return c.ppo.buffer_size; }));
    v.push_back(number<int>("ppo", "epochs", kControl, [](C& c) -> auto& { return c.ppo.epochs; }));
    v.push_back(number<int>("ppo", "minibatches", kControl,
                            [](C& c) -> auto& { return c.ppo.minibatches; }));
    v.push_back(number<double>("ppo", "gae_lambda", kControl,
                               [](C& c) -> auto& { return c.ppo.gae_lambda; }));
    v.push_back(number<double>("ppo", "discount", kControl,
                               [](C& c) -> auto& { return c.ppo.discount; }));
    v.push_back(number<double>("ppo", "policy_clip", kControl,
                               [](C& c) -> auto& { return c.ppo.policy_clip; }));
    v.push_back(number<double>("ppo", "value_clip", kControl,
                               [](C& c) -> auto& { return c.ppo.value_clip; }));
    v.push_back(number<double>("ppo", "grad_clip", kControl,
                               [](C& c) -> auto& { return c.ppo.grad_clip; }));
    v.push_back(number<double>("ppo", "value_coef", kControl,
                               [](C& c) -> auto& { return c.ppo.value_coef; }));
    v.push_back(number<double>("ppo", "entropy_coef", kControl,
                               [](C& c) -> auto& { return c.ppo.entropy_coef; }));
    v.push_back(number<double>("ppo", "lr", kControl, [](C& c) -> auto& { return c.ppo.lr; }));
    v.push_back(boolean("ppo", "recompute_traces", kControl,
                        [](C& c) -> auto& { return c.ppo.recompute_traces; }));
    v.push_back(boolean("ppo", "recompute_targets", kControl,
                        [](C& c) -> auto& { return c.ppo.recompute_targets; }));
    v.push_back(number<int>("ppo", "encoder_hidden", kControl,
                            [](C& c) -> auto& { return c.ppo.encoder_hidden; }));
    v.push_back(number<int>("ppo", "recurrent_n", kControl,
                            [](C& c) -> auto& { return c.ppo.recurrent_n; }));
    v.push_back(enumeration("ppo", "recurrent_activation", kControl,
                            [](C& c) -> auto& { return c.ppo.recurrent_activation; },
                            std::vector{Activation::kIdentity, Activation::kRelu, Activation::kTanh}));
    v.push_back(number<double>("ppo", "recurrent_r_min", kControl,
                               [](C& c) -> auto& { return c.ppo.recurrent_init.r_min; }));
    v.push_back(number<double>("ppo", "recurrent_r_max", kControl,
                               [](C& c) -> auto& { return c.ppo.recurrent_init.r_max; }));
    v.push_back(number<double>("ppo", "recurrent_max_phase", kControl,
                               [](C& c) -> auto& { return c.ppo.recurrent_init.max_phase; }));
    v.push_back(number<int>("ppo", "head_hidden", kControl,
                            [](C& c) -> auto& { return c.ppo.head_hidden; }));
    v.push_back(number<std::int64_t>("ppo", "total_steps", kControl,
                                     [](C& c) -> auto& { return c.ppo.total_steps; }));
    v.push_back(number<double>("ppo", "target_return", kControl,
                               [](C& c) -> auto& { return c.ppo.target_return; }));
    v.push_back(number<double>("ppo", "target_success", kControl,
                               [](C& c) -> auto& { return c.ppo.target_success; }));
    v.push_back(number<int>("ppo", "target_window", kControl,
                            [](C& c) -> auto& { return c.ppo.target_window; }));

    // Gradient check.
    v.push_back(number<int>("gradcheck", "n", kGradcheck, [](C& c) -> auto& { return c.gradcheck.n; }));
    v.push_back(number<int>("gradcheck", "d", kGradcheck, [](C& c) -> auto& { return c.gradcheck.d; }));
    v.push_back(number<int>("gradcheck", "length", kGradcheck,
                            [](C& c) -> auto& { return c.gradcheck.length; }));
    v.push_back(number<int>("gradcheck", "instances", kGradcheck,
                            [](C& c) -> auto& { return c.gradcheck.instances; }));
    v.push_back(number<double>("gradcheck", "fd_step", kGradcheck,
                               [](C& c) -> auto& { return c.gradcheck.fd_step; }));
    v.push_back(number<double>("gradcheck", "rtrl_tolerance", kGradcheck,
                               [](C& c) -> auto& { return c.gradcheck.rtrl_tolerance; }));
    v.push_back(number<double>("gradcheck", "fd_tolerance", kGradcheck,
                               [](C& c) -> auto& { return c.gradcheck.fd_tolerance; }));

    // Timing.
    v.push_back(number<int>("timing", "n", kTiming, [](C& c) -> auto& { return c.timing.n; }));
    v.push_back(number<int>("timing", "d", kTiming, [](C& c) -> auto& { return c.timing.d; }));
    v.push_back({"timing", "truncations", kTiming,
                 [](const C& c) { return join_ints(c.timing.truncations); },
                 [](C& c, const std::string& s) { return parse_ints(s, c.timing.truncations, false); }});
    v.push_back({"timing", "widths", kTiming,
                 [](const C& c) { return join_ints(c.timing.widths); },
                 [](C& c, const std::string& s) { return parse_ints(s, c.timing.widths, true); }});
    v.push_back(number<int>("timing", "repetitions", kTiming,
                            [](C& c) -> auto& { return c.timing.repetitions; }));
    v.push_back(number<int>("timing", "warmup", kTiming, [](C& c) -> auto& { return c.timing.warmup; }));
    v.push_back(number<int>("timing", "updates_per_repetition", kTiming,
                            [](C& c) -> auto& { return c.timing.updates_per_repetition; }));

    // Eigenvalue experiment.
    v.push_back(number<int>("eigen", "n", kEigen, [](C& c) -> auto& { return c.eigen.n; }));
    v.push_back(number<int>("eigen", "truncation", kEigen,
                            [](C& c) -> auto& { return c.eigen.truncation; }));
    v.push_back(number<double>("eigen", "lr", kEigen, [](C& c) -> auto& { return c.eigen.lr; }));
    v.push_back(number<std::int64_t>("eigen", "steps", kEigen,
                                     [](C& c) -> auto& { return c.eigen.steps; }));
    v.push_back(number<int>("eigen", "accuracy_window", kEigen,
                            [](C& c) -> auto& { return c.eigen.accuracy_window; }));
    v.push_back(number<int>("eigen", "log_every", kEigen,
                            [](C& c) -> auto& { return c.eigen.log_every; }));
    return v;
  }();
  return b;
}

const Binding* find_binding(const std::string& section, const std::string& key, unsigned kind) {
  for (const auto& b : registry())
    if (b.section == section && b.key == key && (b.kinds & kind)) return &b;
  return nullptr;
}

bool section_exists(const std::string& section) {
  for (const auto& b : registry())
    if (b.section == section) return true;
  return false;
}

bool section_used_by(const std::string& section, unsigned kind) {
  for (const auto& b : registry())
    if (b.section == section && (b.kinds & kind)) return true;
  return false;
}

struct Entry {
  int line;
  std::string section, key, value;
};

std::vector<ConfigIssue> check(const ExperimentConfig& c) {
  std::vector<ConfigIssue> out;
  auto bad = [&](const std::string& m) { out.push_back({0, m}); };
  auto guarded = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      bad(e.what());
    }
  };
  if (c.seeds.empty()) bad("experiment.seeds must not be empty");
  if (c.name.empty() || c.name.find('/') != std::string::npos)
    bad("experiment.name must be non-empty and contain no '/'");
  switch (c.kind) {
    case ExperimentKind::kPredict: {
      const auto& r = c.predict.recurrent;
      if (r.n < 1) bad("architecture.n must be >= 1");
      if (r.truncation < 1) bad("architecture.truncation must be >= 1");
      if (!(r.init.r_min >= 0.0 && r.init.r_min < r.init.r_max && r.init.r_max <= 1.0))
        bad("architecture: need 0 <= r_min < r_max <= 1");
      if (!(r.init.max_phase > 0.0)) bad("architecture.max_phase must be > 0");
      if (r.mode == LearningMode::kTbptt && r.architecture != Architecture::kRtuLinear &&
          r.architecture != Architecture::kRtuNonlinear)
        bad("architecture: tbptt mode is only available for rtu_linear and rtu_nonlinear");
      guarded([&] { c.predict.env.validate(); });
      if (!(c.predict.adam.lr >= 0.0)) bad("optimizer.lr must be >= 0");
      if (c.predict.steps < 1) bad("predict.steps must be >= 1");
      if (c.predict.msre_window < 1) bad("predict.msre_window must be >= 1");
      if (c.predict.log_every < 0) bad("predict.log_every must be >= 0");
      break;
    }
    case ExperimentKind::kControl:
      guarded([&] { c.ppo.validate(); });
      if (c.control_env.corridor_length < 1) bad("environment.corridor_length must be >= 1");
      if (c.ppo.total_steps < 1) bad("ppo.total_steps must be >= 1");
      break;
    case ExperimentKind::kGradcheck: {
      const auto& g = c.gradcheck;
      if (g.n < 1 || g.d < 1 || g.length < 1 || g.instances < 1)
        bad("gradcheck: n, d, length and instances must be >= 1");
      if (!(g.fd_step > 0.0)) bad("gradcheck.fd_step must be > 0");
      break;
    }
    case ExperimentKind::kTiming: {
      const auto& t = c.timing;
      if (t.n < 1 || t.d < 1) bad("timing: n and d must be >= 1");
      if (t.repetitions < 30) bad("timing.repetitions must be >= 30");
      if (t.warmup < 0) bad("timing.warmup must be >= 0");
      if (t.updates_per_repetition < 1) bad("timing.updates_per_repetition must be >= 1");
      if (t.truncations.empty()) bad("timing.truncations must not be empty");
      for (int T : t.truncations)
        if (T < 1) bad("timing.truncations entries must be >= 1");
      for (int w : t.widths)
        if (w < 1) bad("timing.widths entries must be >= 1");
      break;
    }
    case ExperimentKind::kEigen: {
      const auto& e = c.eigen;
      if (e.n != 3) bad("eigen.n must be 3");
      if (e.truncation < 1) bad("eigen.truncation must be >= 1");
      if (e.steps < 1) bad("eigen.steps must be >= 1");
      if (e.accuracy_window < 1) bad("eigen.accuracy_window must be >= 1");
      if (!(e.lr >= 0.0)) bad("eigen.lr must be >= 0");
      break;
    }
  }
  return out;
}

}  // namespace

void validate_config(const ExperimentConfig& config) {
  auto issues = check(config);
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.name = to_string(kind);
  return c;
}

ExperimentConfig parse_config(std::string_view text) {
  std::vector<ConfigIssue> issues;
  std::vector<Entry> entries;
  std::map<std::string, int> first_line;  // "section.key" -> line
  bool saw_experiment = false;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line =
        trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        issues.push_back({line_no, "malformed section header '" + line + "'"});
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      if (!section_exists(section)) issues.push_back({line_no, "unknown section [" + section + "]"});
      if (section == "experiment") saw_experiment = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line_no, "expected 'key = value', got '" + line + "'"});
      continue;
    }
    if (section.empty()) {
      issues.push_back({line_no, "key outside of any section"});
      continue;
    }
    Entry e{line_no, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    const std::string dotted = e.section + "." + e.key;
    if (auto it = first_line.find(dotted); it != first_line.end()) {
      issues.push_back({line_no, "duplicate key '" + e.key + "' in [" + e.section +
                                     "] (lines " + std::to_string(it->second) + " and " +
                                     std::to_string(line_no) + ")"});
      continue;
    }
    first_line[dotted] = line_no;
    entries.push_back(std::move(e));
  }

  ExperimentConfig cfg;
  if (!saw_experiment) {
    issues.push_back({0, "missing required section [experiment]"});
    throw ConfigError(std::move(issues));
  }
  auto kind_it = first_line.find("experiment.kind");
  if (kind_it == first_line.end()) {
    issues.push_back({0, "missing required key 'kind' in [experiment]"});
    throw ConfigError(std::move(issues));
  }
  for (const auto& e : entries)
    if (e.section == "experiment" && e.key == "kind") {
      try {
        cfg = default_config(parse_experiment_kind(e.value));
      } catch (const Error& err) {
        issues.push_back({e.line, err.what()});
        throw ConfigError(std::move(issues));
      }
    }
  const unsigned kind = kind_bit(cfg.kind);

  std::map<std::string, bool> reported_section;
  for (const auto& e : entries) {
    if (!section_exists(e.section)) continue;  // already reported
    if (!section_used_by(e.section, kind)) {
      if (!reported_section[e.section])
        issues.push_back({e.line, "section [" + e.section + "] is not used by kind " +
                                      to_string(cfg.kind)});
      reported_section[e.section] = true;
      continue;
    }
    const Binding* b = find_binding(e.section, e.key, kind);
    if (!b) {
      issues.push_back({e.line, "unknown key '" + e.key + "' in [" + e.section + "]"});
      continue;
    }
    if (auto err = b->set(cfg, e.value)) issues.push_back({e.line, e.key + ": " + *err});
  }
  if (issues.empty()) issues = check(cfg);
  std::stable_sort(issues.begin(), issues.end(), [](const ConfigIssue& a, const ConfigIssue& b) {
    return (a.line == 0 ? INT_MAX : a.line) < (b.line == 0 ? INT_MAX : b.line);
  });
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& config) {
  const unsigned kind = kind_bit(config.kind);
  std::string out, section;
  for (const auto& b : registry()) {
    if (!(b.kinds & kind)) continue;
    if (b.section != section) {
      if (!out.empty()) out += "\n";
      section = b.section;
      out += "[" + section + "]\n";
    }
    const std::string value = b.get(config);
    out += b.key + (value.empty() ? " =\n" : " = " + value + "\n");
  }
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : emit_config(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

void set_config_value(ExperimentConfig& config, const std::string& dotted_key,
                      const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos)
    throw ConfigError({{0, "expected section.key, got '" + dotted_key + "'"}});
  const std::string section = dotted_key.substr(0, dot), key = dotted_key.substr(dot + 1);
  if (section == "experiment" && key == "kind")
    throw ConfigError({{0, "experiment.kind cannot be overridden"}});
  const Binding* b = find_binding(section, key, kind_bit(config.kind));
  if (!b)
    throw ConfigError({{0, "unknown key '" + dotted_key + "' for kind " + to_string(config.kind)}});
  ExperimentConfig next = config;
  if (auto err = b->set(next, trim(value))) throw ConfigError({{0, dotted_key + ": " + *err}});
  validate_config(next);
  config = next;
}

void set_total_steps(ExperimentConfig& config, std::int64_t steps) {
  if (steps < 1) throw ConfigError({{0, "steps must be >= 1"}});
  switch (config.kind) {
    case ExperimentKind::kPredict: config.predict.steps = steps; return;
    case ExperimentKind::kControl: config.ppo.total_steps = steps; return;
    case ExperimentKind::kEigen: config.eigen.steps = steps; return;
    default:
      fail(ErrorCode::kUnsupported, "kind " + to_string(config.kind) + " has no step budget");
  }
}

void set_learning_rate(ExperimentConfig& config, double lr) {
  if (!(lr >= 0.0)) throw ConfigError({{0, "learning rate must be >= 0"}});
  switch (config.kind) {
    case ExperimentKind::kPredict: config.predict.adam.lr = lr; return;
    case ExperimentKind::kControl: config.ppo.lr = lr; return;
    case ExperimentKind::kEigen: config.eigen.lr = lr; return;
    default:
      fail(ErrorCode::kUnsupported, "kind " + to_string(config.kind) + " has no learning rate");
  }
}

}  // namespace rtu
