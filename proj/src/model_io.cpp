#include <fstream>

#include "tabsynth/error.h"
#include "tabsynth/gan.h"

namespace tabsynth {

namespace {

constexpr int kFormat = 1;
constexpr const char* kManifest = "model.json";

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_model(const GanModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  model.generator.save((dir / "generator.bin").string());
  model.discriminator.save((dir / "discriminator.bin").string());
  if (model.classifier) model.classifier->save((dir / "classifier.bin").string());

  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t c = 0; c < model.frequencies.columns(); ++c) counts.push_back(model.frequencies.counts(c));
  nlohmann::json j{{"format", kFormat},
                   {"config", to_json(model.config)},
                   {"schema", to_json(model.schema)},
                   {"codecs", to_json(model.codecs)},
                   {"frequency_counts", counts},
                   {"frequencies", to_json(model.frequencies)},
                   {"history", model.history.series}};
  j["target_codec"] = model.target_codec ? nlohmann::json(*model.target_codec) : nlohmann::json(nullptr);
  if (model.classifier_features) j["classifier_features"] = model.classifier_features->to_json();

  // The manifest is written last and renamed into place so a reader never sees a
  // manifest without its checkpoints.
  const auto tmp = dir / (std::string(kManifest) + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(1) << '\n';
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / kManifest);
}

GanModel load_model(const std::filesystem::path& dir) {
  const auto j = read_json(dir / kManifest);
  GanModel model;
  try {
    if (j.at("format").get<int>() != kFormat) throw InputError("unsupported model format");
    model.config = train_config_from_json(j.at("config"));
    model.schema = schema_from_json(j.at("schema"));
    model.codecs = codec_bundle_from_json(j.at("codecs"));
    model.frequencies = FrequencyTable(build_condition_layout(model.codecs.layout),
                                       j.at("frequency_counts").get<std::vector<std::vector<std::size_t>>>());
    model.history.series = j.at("history").get<std::map<std::string, std::vector<double>>>();
    if (!j.at("target_codec").is_null()) model.target_codec = j.at("target_codec").get<std::size_t>();
    if (j.contains("classifier_features")) {
      model.classifier_features = ClassifierFeatures::from_json(j.at("classifier_features"), model.codecs);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed model manifest: " + std::string(e.what()));
  }
  model.generator = DenseNet::load((dir / "generator.bin").string());
  model.discriminator = DenseNet::load((dir / "discriminator.bin").string());
  if (model.classifier_features) model.classifier = DenseNet::load((dir / "classifier.bin").string());

  const std::size_t w = model.codecs.layout.width, v = model.condition_layout().width;
  if (model.generator.input_dim() != model.config.noise_dim + v || model.generator.output_dim() != w ||
      model.discriminator.input_dim() != w + v) {
    throw InputError("model checkpoints do not match the codec layout");
  }
  return model;
}

}  // namespace tabsynth
