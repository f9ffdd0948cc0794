#include "rsovseg/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <set>

#include "rsovseg/errors.hpp"
#include "rsovseg/image_io.hpp"

namespace rsovseg {

using nlohmann::json;

namespace {

// Reads `j[key]` into `out` when present, rejecting type mismatches with a
// message that names the full key path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config field \"" + qualified(key) + "\" has the wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key \"" + qualified(key) + "\"");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json model_to_json(const ModelConfig& m) {
  return {
      {"encoder", m.encoder},
      {"seed", m.seed},
      {"vision", {{"patch", m.vision.patch}, {"dim", m.vision.dim},
                  {"attention", m.vision.attention}}},
      {"text", {{"dim", m.text.dim}, {"seed", m.text.seed}, {"attention", m.text.attention}}},
      {"guidance", {{"strides", m.guidance.strides}, {"dims", m.guidance.dims}}},
      {"angles", m.angles},
      {"templates", m.templates},
      {"d_phi", m.d_phi},
      {"fusion_kernel", m.fusion_kernel},
      {"refine_blocks", m.refine_blocks},
      {"window_size", m.window_size},
      {"num_heads", m.num_heads},
      {"mlp_ratio", m.mlp_ratio},
      {"backproj_hidden", m.backproj_hidden},
      {"decoder_dims", m.decoder_dims},
      {"resize_guidance", m.resize_guidance},
  };
}

ModelConfig model_from_json(const json& j, const std::string& path) {
  ModelConfig m;
  Reader r(j, path);
  r.get("encoder", m.encoder);
  r.get("seed", m.seed);
  if (const json* v = r.child("vision")) {
    Reader rv(*v, r.qualified("vision"));
    rv.get("patch", m.vision.patch);
    rv.get("dim", m.vision.dim);
    rv.get("attention", m.vision.attention);
    rv.finish();
  }
  if (const json* t = r.child("text")) {
    Reader rt(*t, r.qualified("text"));
    rt.get("dim", m.text.dim);
    rt.get("seed", m.text.seed);
    rt.get("attention", m.text.attention);
    rt.finish();
  }
  if (const json* g = r.child("guidance")) {
    Reader rg(*g, r.qualified("guidance"));
    rg.get("strides", m.guidance.strides);
    rg.get("dims", m.guidance.dims);
    rg.finish();
  }
  r.get("angles", m.angles);
  r.get("templates", m.templates);
  r.get("d_phi", m.d_phi);
  r.get("fusion_kernel", m.fusion_kernel);
  r.get("refine_blocks", m.refine_blocks);
  r.get("window_size", m.window_size);
  r.get("num_heads", m.num_heads);
  r.get("mlp_ratio", m.mlp_ratio);
  r.get("backproj_hidden", m.backproj_hidden);
  r.get("decoder_dims", m.decoder_dims);
  r.get("resize_guidance", m.resize_guidance);
  r.finish();
  return m;
}

json train_to_json(const TrainConfig& t) {
  return {{"lr_vl", t.lr_vl},           {"lr_other", t.lr_other},
          {"weight_decay", t.weight_decay}, {"beta1", t.beta1},
          {"beta2", t.beta2},           {"eps", t.eps},
          {"batch_size", t.batch_size}, {"max_iters", t.max_iters},
          {"bce_weight", t.bce_weight}, {"sem_weight", t.sem_weight}};
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (model.encoder != "stub" && model.encoder != "adapter") {
    throw ConfigError("model.encoder must be \"stub\" or \"adapter\", got \"" + model.encoder +
                      "\"");
  }
  if (model.d_phi < 1 || model.window_size < 1 || model.num_heads < 1) {
    throw ConfigError("model.d_phi, model.window_size and model.num_heads must be >= 1");
  }
  if (model.d_phi % model.num_heads != 0) {
    throw ConfigError("model.d_phi must be divisible by model.num_heads");
  }
}

RunConfig parse_run_config(const std::string& json_text, bool require_manifest) {
  const json j = parse_json(json_text, "config");
  RunConfig c;
  Reader r(j, "");
  r.get("manifest", c.manifest);
  r.get("output_dir", c.output_dir);
  r.get("seed", c.seed);
  r.get("split", c.split);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("checkpoint", c.checkpoint);
  if (const json* m = r.child("model")) c.model = model_from_json(*m, "model");
  if (const json* t = r.child("train")) {
    Reader rt(*t, "train");
    rt.get("lr_vl", c.train.lr_vl);
    rt.get("lr_other", c.train.lr_other);
    rt.get("weight_decay", c.train.weight_decay);
    rt.get("beta1", c.train.beta1);
    rt.get("beta2", c.train.beta2);
    rt.get("eps", c.train.eps);
    rt.get("batch_size", c.train.batch_size);
    rt.get("max_iters", c.train.max_iters);
    rt.get("bce_weight", c.train.bce_weight);
    rt.get("sem_weight", c.train.sem_weight);
    rt.finish();
  }
  r.finish();
  if (require_manifest && c.manifest.empty()) {
    throw ConfigError("config field \"manifest\" is required");
  }
  c.validate();
  return c;
}

std::string emit_run_config(const RunConfig& c) {
  json j = {{"manifest", c.manifest},
            {"output_dir", c.output_dir},
            {"seed", c.seed},
            {"split", c.split},
            {"checkpoint_every", c.checkpoint_every},
            {"checkpoint", c.checkpoint},
            {"model", model_to_json(c.model)},
            {"train", train_to_json(c.train)}};
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_run_config(text);
}

std::string emit_model_config(const ModelConfig& config) { return model_to_json(config).dump(); }

ModelConfig parse_model_config(const std::string& json_text) {
  return model_from_json(parse_json(json_text, "model config"), "model");
}

std::filesystem::path resolve_output_dir(const std::string& output_dir) {
  const std::filesystem::path p(output_dir);
  const char* root = std::getenv("RSOVSEG_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) return std::filesystem::path(root) / p;
  return p;
}

}  // namespace rsovseg
