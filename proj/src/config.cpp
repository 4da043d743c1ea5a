#include "wlforge/config.hpp"

#include "wlforge/random.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace wlforge {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json fidelity_json(const OracleFidelity& f) {
  return {{"dilate", f.dilate}, {"noise_rate", f.noise_rate}, {"flip_band", f.flip_band}, {"box_leak", f.box_leak}, {"seed", f.seed}};
}

OracleFidelity fidelity_from(const json& j, OracleFidelity f) {
  reject_unknown(j, {"dilate", "noise_rate", "flip_band", "box_leak", "seed"}, "fidelity");
  read(j, "dilate", f.dilate);
  read(j, "noise_rate", f.noise_rate);
  read(j, "flip_band", f.flip_band);
  read(j, "box_leak", f.box_leak);
  read(j, "seed", f.seed);
  f.validate();
  return f;
}

json vec3(const FeatureVector& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

FeatureVector vec_from(const json& j) {
  if (!j.is_array() || j.size() != kFeatureCount) throw ConfigError("classifier vectors must have 6 entries");
  FeatureVector v;
  for (int i = 0; i < kFeatureCount; ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

}  // namespace

json to_json(const PromptSpec& s) {
  return {{"mode", to_string(s.mode)},
          {"strategy", to_string(s.strategy)},
          {"binarize_tau", s.binarize_tau},
          {"policy", {{"rel_area_min", s.policy.rel_area_min}, {"abs_area_min", s.policy.abs_area_min}, {"max_regions", s.policy.max_regions}}},
          {"connectivity", static_cast<int>(s.connectivity)},
          {"neg_count", s.neg_count},
          {"neg_tau", s.neg_tau},
          {"neg_min_sep", s.neg_min_sep},
          {"box_pad", s.box_pad},
          {"split_points", s.split_points},
          {"seed", s.seed}};
}

PromptSpec prompt_spec_from_json(const json& j) {
  reject_unknown(j, {"mode", "strategy", "binarize_tau", "policy", "connectivity", "neg_count", "neg_tau", "neg_min_sep", "box_pad", "split_points", "seed"},
                 "prompt_spec");
  PromptSpec s;
  try {
    if (j.contains("mode")) s.mode = parse_prompt_mode(j.at("mode").get<std::string>());
    if (j.contains("strategy")) s.strategy = parse_prompt_strategy(j.at("strategy").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  read(j, "binarize_tau", s.binarize_tau);
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    reject_unknown(p, {"rel_area_min", "abs_area_min", "max_regions"}, "policy");
    read(p, "rel_area_min", s.policy.rel_area_min);
    read(p, "abs_area_min", s.policy.abs_area_min);
    read(p, "max_regions", s.policy.max_regions);
  }
  int conn = static_cast<int>(s.connectivity);
  read(j, "connectivity", conn);
  if (conn != 4 && conn != 8) throw ConfigError("connectivity must be 4 or 8");
  s.connectivity = conn == 4 ? Connectivity::Four : Connectivity::Eight;
  read(j, "neg_count", s.neg_count);
  read(j, "neg_tau", s.neg_tau);
  read(j, "neg_min_sep", s.neg_min_sep);
  read(j, "box_pad", s.box_pad);
  read(j, "split_points", s.split_points);
  read(j, "seed", s.seed);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

json to_json(const BackendConfig& b) {
  if (b.kind == BackendKind::MockOracle)
    return {{"kind", "mock_oracle"}, {"preset", b.preset}, {"fidelity", fidelity_json(b.fidelity)}};
  json j = {{"kind", "external"}, {"command", b.external.command}, {"timeout", b.external.timeout_seconds}};
  if (b.external.oracle_hints) j["oracle_hints"] = fidelity_json(*b.external.oracle_hints);
  return j;
}

BackendConfig backend_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("backend must be an object");
  BackendConfig b;
  const std::string kind = j.value("kind", "mock_oracle");
  if (kind == "mock_oracle") {
    reject_unknown(j, {"kind", "preset", "fidelity"}, "backend (mock_oracle)");
    read(j, "preset", b.preset);
    try {
      b.fidelity = fidelity_preset(b.preset).fidelity;
    } catch (const std::invalid_argument&) {
      if (!j.contains("fidelity")) throw ConfigError("unknown fidelity preset '" + b.preset + "'");
    }
    if (j.contains("fidelity")) b.fidelity = fidelity_from(j.at("fidelity"), b.fidelity);
  } else if (kind == "external") {
    reject_unknown(j, {"kind", "command", "timeout", "oracle_hints"}, "backend (external)");
    b.kind = BackendKind::External;
    read(j, "command", b.external.command);
    read(j, "timeout", b.external.timeout_seconds);
    if (j.contains("oracle_hints")) b.external.oracle_hints = fidelity_from(j.at("oracle_hints"), OracleFidelity{});
  } else {
    throw ConfigError("backend kind must be mock_oracle or external");
  }
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return b;
}

json to_json(const PipelineConfig& c) {
  json modes = json::array();
  for (auto m : c.eval_prompt_modes) modes.push_back(to_string(m));
  return {{"dataset", c.dataset.generic_string()},
          {"n_gold", c.n_gold},
          {"n_weak_targets", c.n_weak_targets},
          {"prompt_spec", to_json(c.prompt_spec)},
          {"backend", to_json(c.backend)},
          {"tau_filter", c.tau_filter},
          {"trainer", {{"epochs", c.trainer.epochs}, {"learn_rate", c.trainer.learn_rate}, {"samples_per_class", c.trainer.samples_per_class}}},
          {"eval_prompt_modes", modes},
          {"seeds", c.seeds},
          {"out_dir", c.out_dir.generic_string()}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  reject_unknown(j, {"dataset", "n_gold", "n_weak_targets", "prompt_spec", "backend", "tau_filter", "trainer", "eval_prompt_modes", "seeds", "out_dir"},
                 "pipeline config");
  PipelineConfig c;
  std::string text;
  if (j.contains("dataset")) {
    read(j, "dataset", text);
    c.dataset = text;
  }
  read(j, "n_gold", c.n_gold);
  read(j, "n_weak_targets", c.n_weak_targets);
  if (j.contains("prompt_spec")) c.prompt_spec = prompt_spec_from_json(j.at("prompt_spec"));
  if (j.contains("backend")) c.backend = backend_from_json(j.at("backend"));
  read(j, "tau_filter", c.tau_filter);
  if (j.contains("trainer")) {
    const auto& t = j.at("trainer");
    reject_unknown(t, {"epochs", "learn_rate", "samples_per_class"}, "trainer");
    read(t, "epochs", c.trainer.epochs);
    read(t, "learn_rate", c.trainer.learn_rate);
    read(t, "samples_per_class", c.trainer.samples_per_class);
  }
  if (j.contains("eval_prompt_modes")) {
    c.eval_prompt_modes.clear();
    try {
      for (const auto& m : j.at("eval_prompt_modes")) c.eval_prompt_modes.push_back(parse_eval_prompt_mode(m.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  read(j, "seeds", c.seeds);
  if (j.contains("out_dir")) {
    read(j, "out_dir", text);
    c.out_dir = text;
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

json to_json(const PixelClassifier& m) {
  return {{"weights", vec3(m.weights)}, {"bias", m.bias}, {"feature_means", vec3(m.feature_means)}, {"feature_stds", vec3(m.feature_stds)}};
}

PixelClassifier classifier_from_json(const json& j) {
  reject_unknown(j, {"weights", "bias", "feature_means", "feature_stds"}, "classifier");
  PixelClassifier m;
  m.weights = vec_from(j.at("weights"));
  m.bias = j.at("bias").get<double>();
  m.feature_means = vec_from(j.at("feature_means"));
  m.feature_stds = vec_from(j.at("feature_stds"));
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

void save_classifier(const PixelClassifier& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  // dump() prints doubles round-trip exact.
  out << to_json(model).dump(2) << '\n';
}

PixelClassifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model " + path.string());
  try {
    return classifier_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const SynthConfig& c) {
  return {{"width", c.width},
          {"height", c.height},
          {"n_lesions", {c.n_lesions.min, c.n_lesions.max}},
          {"radius_frac", {c.radius_frac.min, c.radius_frac.max}},
          {"contrast", c.contrast},
          {"bg_level", c.bg_level},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},
          {"contrast_jitter", c.contrast_jitter},
          {"bg_jitter", c.bg_jitter},
          {"shading", c.shading}};
}

SynthConfig synth_config_from_json(const json& j) {
  reject_unknown(j, {"width", "height", "n_lesions", "radius_frac", "contrast", "bg_level", "noise_sigma", "seed", "contrast_jitter", "bg_jitter", "shading"},
                 "synth config");
  SynthConfig c = benchmark_synth_config();
  read(j, "width", c.width);
  read(j, "height", c.height);
  if (j.contains("n_lesions")) c.n_lesions = {j.at("n_lesions").at(0).get<int>(), j.at("n_lesions").at(1).get<int>()};
  if (j.contains("radius_frac")) c.radius_frac = {j.at("radius_frac").at(0).get<double>(), j.at("radius_frac").at(1).get<double>()};
  read(j, "contrast", c.contrast);
  read(j, "bg_level", c.bg_level);
  read(j, "noise_sigma", c.noise_sigma);
  read(j, "seed", c.seed);
  read(j, "contrast_jitter", c.contrast_jitter);
  read(j, "bg_jitter", c.bg_jitter);
  read(j, "shading", c.shading);
  return c;
}

json to_json(const RunRecord& r) {
  return {{"stage_seconds", r.stage_seconds},
          {"counts",
           {{"attempted", r.counts.attempted},
            {"accepted", r.counts.accepted},
            {"coarse_empty", r.counts.coarse_empty},
            {"filtered_over_fg", r.counts.filtered_over_fg},
            {"filtered_over_bg", r.counts.filtered_over_bg}}},
          {"config_hash", r.config_hash},
          {"warm_start", r.warm_start},
          {"warnings", r.warnings}};
}

std::string config_hash(const PipelineConfig& cfg) {
  json j = to_json(cfg);
  j.erase("out_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace wlforge
