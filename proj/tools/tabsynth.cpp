// Command-line entry points. Exit codes: 0 success, 2 input error, 3 training failure.
#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <set>

#include "tabsynth/error.h"
#include "tabsynth/gan.h"
#include "tabsynth/report.h"
#include "tabsynth/schema.h"
#include "tabsynth/service.h"
#include "tabsynth/split.h"
#include "tabsynth/table.h"
#include "tabsynth/workspace.h"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tabsynth;

namespace {

constexpr int kInputError = 2;
constexpr int kTrainingError = 3;

Schema read_schema(const fs::path& path) {
  try {
    return schema_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw InputError("cannot parse schema " + path.string() + ": " + e.what());
  }
}

Schema with_target(Schema schema, const std::string& target) {
  if (target.empty()) return schema;
  const ColumnOverride o{target, std::nullopt, true, true};
  return apply_overrides(schema, std::span(&o, 1));
}

void print_schema(const Schema& schema, const Table& table, std::ostream& out) {
  out << std::left << std::setw(24) << "column" << std::setw(22) << "kind" << std::setw(10) << "include"
      << std::setw(8) << "missing" << "distinct\n";
  for (const auto& c : schema.columns()) {
    const auto& col = table.column(c.name);
    std::set<std::string> distinct;
    for (const auto& cell : col.cells()) {
      if (cell) distinct.insert(*cell);
    }
    std::string kind = kind_name(c.kind);
    if (const auto* m = std::get_if<MixedKind>(&c.kind); m && !m->categorical_values.empty()) {
      kind += "{";
      for (std::size_t i = 0; i < m->categorical_values.size(); ++i) {
        kind += (i ? "," : "") + format_number(m->categorical_values[i]);
      }
      kind += "}";
    }
    if (c.target) kind += " (target)";
    out << std::setw(24) << c.name << std::setw(22) << kind << std::setw(10) << (c.include ? "yes" : "no")
        << std::setw(8) << col.missing_count() << distinct.size() << '\n';
  }
}

// A bundle argument is a directory path or a model id inside the workspace.
fs::path resolve_bundle(const std::string& bundle, const fs::path& workspace) {
  if (fs::exists(fs::path(bundle) / "model.json")) return bundle;
  const fs::path in_ws = workspace / "models" / bundle;
  if (fs::exists(in_ws / "model.json")) return in_ws;
  throw InputError("no model bundle at '" + bundle + "'");
}

struct SchemaArgs {
  std::string csv, overrides, target, out = "schema.json", workspace;
};

int cmd_schema(const SchemaArgs& a) {
  const std::string bytes = read_file(a.csv);
  const Table table = parse_csv(bytes);
  Schema schema = infer_schema(table);
  if (!a.overrides.empty()) {
    const auto overrides = overrides_from_json(json::parse(read_file(a.overrides)));
    schema = apply_overrides(schema, overrides);
  }
  schema = with_target(schema, a.target);
  check_schema_matches(schema, table);
  write_file_atomic(a.out, to_json(schema).dump(2) + "\n");
  print_schema(schema, table, std::cout);
  std::cout << "schema written to " << a.out << '\n';
  if (!a.workspace.empty()) {
    const Workspace ws(a.workspace);
    const std::string id = content_id(bytes);
    write_file_atomic(ws.dataset_dir(id) / "data.csv", bytes);
    write_file_atomic(ws.dataset_dir(id) / "schema.json", to_json(schema).dump(2));
    ws.update_manifest([&](json& m) { m["datasets"][id] = {{"rows", table.rows()}, {"columns", table.cols()}}; });
    std::cout << "dataset " << id << '\n';
  }
  return 0;
}

struct SplitArgs {
  std::string csv, schema, train_out = "train.csv", test_out = "test.csv";
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a) {
  const Table table = load_csv(a.csv);
  const Schema schema = read_schema(a.schema);
  check_schema_matches(schema, table);
  if (!(a.test_fraction > 0.0 && a.test_fraction < 1.0)) throw InputError("--test-fraction must be in (0, 1)");
  const auto split = stratified_split(table, resolve_target(schema, table), a.test_fraction, a.seed);
  save_csv(split.train, a.train_out);
  save_csv(split.test, a.test_out);
  std::cout << "train " << split.train.rows() << " rows -> " << a.train_out << "\ntest " << split.test.rows()
            << " rows -> " << a.test_out << '\n';
  return 0;
}

struct TrainArgs {
  std::string csv, schema, config, workspace = "workspace", out;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<std::uint64_t> seed;
  bool no_classifier = false, no_info_loss = false, no_vgm = false, quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const std::string bytes = read_file(a.csv);
  const Table table = parse_csv(bytes);
  const Schema schema = read_schema(a.schema);
  check_schema_matches(schema, table);

  TrainConfig config;
  if (!a.config.empty()) config = train_config_from_json(json::parse(read_file(a.config)));
  if (a.epochs) config.epochs = *a.epochs;
  if (a.batch_size) config.batch_size = *a.batch_size;
  if (a.seed) config.seed = *a.seed;
  if (a.no_classifier) config.ablation.classifier_on = false;
  if (a.no_info_loss) config.ablation.info_loss_on = false;
  if (a.no_vgm) config.ablation.vgm_on = false;
  config.validate();

  // Identical inputs map to the same bundle, so reruns overwrite with identical content.
  const std::string id = content_id(bytes + to_json(schema).dump() + to_json(config).dump());
  const Workspace ws(a.workspace);
  const fs::path dir = a.out.empty() ? ws.model_dir(id) : fs::path(a.out);
  fs::create_directories(dir);
  const FileLock lock(dir / ".lock", false);

  const GanModel model = fit_gan(table, schema, config, [&](const EpochReport& r) {
    if (!a.quiet) {
      std::cerr << "epoch " << r.epoch << "/" << r.epochs;
      for (const auto& [k, v] : r.losses) std::cerr << ' ' << k << '=' << std::setprecision(4) << v;
      std::cerr << '\n';
    }
    return true;
  });
  save_model(model, dir);
  ws.update_manifest([&](json& m) {
    m["models"][id] = {{"dataset", content_id(bytes)}, {"state", "done"}, {"config", to_json(config)},
                       {"schema", to_json(schema)}, {"path", fs::absolute(dir).string()}};
  });
  std::cout << "model " << id << " -> " << dir.string() << '\n';
  return 0;
}

struct GenerateArgs {
  std::string bundle, condition, out, workspace = "workspace";
  std::size_t rows = 0;
  std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.rows == 0) throw InputError("--rows must be positive");
  const GanModel model = load_model(resolve_bundle(a.bundle, a.workspace));
  std::optional<ConditionalVector> cond;
  if (!a.condition.empty()) cond = parse_condition(model, a.condition);
  const Table out = synthesize(model, a.rows, a.seed, cond);
  if (a.out.empty()) {
    write_csv(out, std::cout);
  } else {
    save_csv(out, a.out);
    std::cerr << a.rows << " rows -> " << a.out << '\n';
  }
  return 0;
}

struct EvaluateArgs {
  std::string real, synthetic, schema, test, target, out, workspace = "workspace";
  bool utility = false, no_privacy = false, json_only = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const Table real = load_csv(a.real);
  const Table synth = load_csv(a.synthetic);
  const Schema schema = with_target(read_schema(a.schema), a.target);
  const bool wants_utility = a.utility || !a.test.empty();
  if (wants_utility && !schema.target()) throw InputError("ML utility needs a target column (--target or schema)");
  if (a.utility && a.test.empty()) throw InputError("--utility needs a real test set (--test)");
  std::optional<Table> test;
  if (!a.test.empty()) test = load_csv(a.test);

  ReportOptions options;
  options.privacy = !a.no_privacy;
  const json report = evaluation_report(real, synth, schema, test ? &*test : nullptr, options);

  fs::path path = a.out;
  if (path.empty()) {
    const Workspace ws(a.workspace);
    const std::string id = content_id(read_file(a.real) + read_file(a.synthetic) + to_json(schema).dump() +
                                      (a.test.empty() ? "" : read_file(a.test)));
    path = ws.report_path(id);
    ws.update_manifest([&](json& m) { m["reports"][id] = {{"state", "done"}, {"path", fs::absolute(path).string()}}; });
  }
  write_file_atomic(path, report.dump(1) + "\n");
  if (a.json_only) {
    std::cout << report.dump(2) << '\n';
  } else {
    std::cout << format_report(report) << "report written to " << path.string() << '\n';
  }
  return 0;
}

int cmd_report(const std::string& report, const std::string& workspace, bool json_only) {
  fs::path path = report;
  if (!fs::exists(path)) path = Workspace(workspace).report_path(report);
  const json j = json::parse(read_file(path));
  std::cout << (json_only ? j.dump(2) + "\n" : format_report(j));
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const std::string& workspace, const std::string& host, int port) {
  Service service(workspace);
  httplib::Server server;
  service.mount(server);
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw InputError("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "listening on " << host << ":" << bound << std::endl;
  server.listen_after_bind();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional GAN synthesizer for mixed-type tables"};
  app.require_subcommand(1);

  SchemaArgs schema_args;
  auto* schema = app.add_subcommand("schema", "Infer column kinds and write a schema file");
  schema->add_option("csv", schema_args.csv, "Input CSV")->required();
  schema->add_option("--overrides", schema_args.overrides, "JSON list of column overrides");
  schema->add_option("--target", schema_args.target, "Target column");
  schema->add_option("-o,--out", schema_args.out, "Schema output path")->capture_default_str();
  schema->add_option("--workspace", schema_args.workspace, "Also register the dataset in this workspace");

  SplitArgs split_args;
  auto* split = app.add_subcommand("split", "Stratified train/test split");
  split->add_option("csv", split_args.csv)->required();
  split->add_option("--schema", split_args.schema)->required();
  split->add_option("--test-fraction", split_args.test_fraction)->capture_default_str();
  split->add_option("--seed", split_args.seed)->capture_default_str();
  split->add_option("--train-out", split_args.train_out)->capture_default_str();
  split->add_option("--test-out", split_args.test_out)->capture_default_str();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model bundle");
  train->add_option("csv", train_args.csv)->required();
  train->add_option("--schema", train_args.schema)->required();
  train->add_option("--config", train_args.config, "TrainConfig JSON; flags below take precedence");
  train->add_option("--epochs", train_args.epochs, "Training epochs (default 150)");
  train->add_option("--batch-size", train_args.batch_size, "Batch size (default 500)");
  train->add_option("--seed", train_args.seed);
  train->add_flag("--no-classifier", train_args.no_classifier, "Drop the auxiliary classifier and its loss");
  train->add_flag("--no-info-loss", train_args.no_info_loss, "Drop the information loss");
  train->add_flag("--no-vgm", train_args.no_vgm, "Min-max normalization instead of mode-specific encoding");
  train->add_option("--workspace", train_args.workspace)->capture_default_str();
  train->add_option("-o,--out", train_args.out, "Bundle directory (default: workspace/models/<id>)");
  train->add_flag("-q,--quiet", train_args.quiet);

  GenerateArgs gen_args;
  auto* generate = app.add_subcommand("generate", "Synthesize rows from a bundle");
  generate->add_option("bundle", gen_args.bundle, "Bundle directory or model id")->required();
  generate->add_option("--rows", gen_args.rows)->required();
  generate->add_option("--condition", gen_args.condition, "column=value (numeric columns: column=#mode)");
  generate->add_option("--seed", gen_args.seed)->capture_default_str();
  generate->add_option("-o,--out", gen_args.out, "Output CSV (default: stdout)");
  generate->add_option("--workspace", gen_args.workspace)->capture_default_str();

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Compare synthetic data with real data");
  evaluate->add_option("real", eval_args.real)->required();
  evaluate->add_option("synthetic", eval_args.synthetic)->required();
  evaluate->add_option("--schema", eval_args.schema)->required();
  evaluate->add_option("--test", eval_args.test, "Real held-out set for ML utility");
  evaluate->add_option("--target", eval_args.target);
  evaluate->add_flag("--utility", eval_args.utility, "Require the ML utility block");
  evaluate->add_flag("--no-privacy", eval_args.no_privacy);
  evaluate->add_flag("--json", eval_args.json_only, "Print the report document instead of tables");
  evaluate->add_option("-o,--out", eval_args.out, "Report path (default: workspace/reports/<id>.json)");
  evaluate->add_option("--workspace", eval_args.workspace)->capture_default_str();

  std::string report_arg, report_ws = "workspace";
  bool report_json = false;
  auto* report = app.add_subcommand("report", "Print a stored report");
  report->add_option("report", report_arg, "Report file or id")->required();
  report->add_option("--workspace", report_ws)->capture_default_str();
  report->add_flag("--json", report_json);

  std::string serve_ws = "workspace", host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--workspace", serve_ws)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    if (*schema) return cmd_schema(schema_args);
    if (*split) return cmd_split(split_args);
    if (*train) return cmd_train(train_args);
    if (*generate) return cmd_generate(gen_args);
    if (*evaluate) return cmd_evaluate(eval_args);
    if (*report) return cmd_report(report_arg, report_ws, report_json);
    if (*serve) return cmd_serve(serve_ws, host, port);
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTrainingError;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
