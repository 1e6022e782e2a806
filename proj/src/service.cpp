#include "tabsynth/service.h"

#include <httplib.h>

#include "tabsynth/error.h"
#include "tabsynth/split.h"

namespace tabsynth {

namespace {

using json = nlohmann::json;

Service::Reply error_reply(int status, const std::string& message) { return {status, {{"error", message}}}; }

JobState parse_state(const std::string& s) {
  if (s == "queued") return JobState::Queued;
  if (s == "running") return JobState::Running;
  if (s == "done") return JobState::Done;
  return JobState::Failed;
}

JobKind parse_kind(const std::string& s) {
  if (s == "synthesize") return JobKind::Synthesize;
  if (s == "report") return JobKind::Report;
  return JobKind::Train;
}

// Allocates a fresh id inside a manifest edit; the sequence number makes repeated
// identical content yield distinct ids.
std::string allocate_id(json& manifest, const std::string& content) {
  const std::uint64_t seq = manifest.value("sequence", std::uint64_t{0}) + 1;
  manifest["sequence"] = seq;
  return content_id(content + "#" + std::to_string(seq));
}

std::optional<json> entry(const json& manifest, const char* store, const std::string& id) {
  const auto& s = manifest.at(store);
  if (!s.contains(id)) return std::nullopt;
  return s.at(id);
}

bool positive_integer(const json& j) {
  return j.is_number_integer() && j.get<std::int64_t>() > 0;
}

Table load_dataset(const Workspace& ws, const std::string& id) { return load_csv(ws.dataset_dir(id) / "data.csv"); }

Schema load_dataset_schema(const Workspace& ws, const std::string& id) {
  return schema_from_json(json::parse(read_file(ws.dataset_dir(id) / "schema.json")));
}

}  // namespace

std::string job_kind_name(JobKind kind) {
  switch (kind) {
    case JobKind::Train: return "train";
    case JobKind::Synthesize: return "synthesize";
    case JobKind::Report: return "report";
  }
  return "train";
}

std::string job_state_name(JobState state) {
  switch (state) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "failed";
}

json to_json(const Job& job) {
  json j{{"id", job.id},
         {"kind", job_kind_name(job.kind)},
         {"state", job_state_name(job.state)},
         {"progress", {{"current", job.progress}, {"total", job.total}}},
         {"artifact", job.artifact}};
  j["error"] = job.error.empty() ? json(nullptr) : json(job.error);
  if (job.kind == JobKind::Train) j["losses"] = job.losses;
  return j;
}

Service::Service(std::filesystem::path workspace, ServiceOptions options)
    : workspace_(std::move(workspace)), options_(std::move(options)) {
  recover();
  train_worker_ = std::thread([this] { worker_loop(train_queue_); });
  aux_worker_ = std::thread([this] { worker_loop(aux_queue_); });
}

Service::~Service() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  changed_.notify_all();
  train_worker_.join();
  aux_worker_.join();
}

void Service::recover() {
  // Work that was queued or running when the previous instance stopped cannot resume.
  workspace_.update_manifest([&](json& m) {
    for (auto& [id, j] : m["jobs"].items()) {
      Job job;
      job.id = id;
      job.kind = parse_kind(j.value("kind", "train"));
      job.state = parse_state(j.value("state", "failed"));
      job.progress = j["progress"].value("current", std::size_t{0});
      job.total = j["progress"].value("total", std::size_t{0});
      job.artifact = j.value("artifact", "");
      if (j.contains("error") && j["error"].is_string()) job.error = j["error"].get<std::string>();
      if (job.state == JobState::Queued || job.state == JobState::Running) {
        job.state = JobState::Failed;
        job.error = "interrupted by service restart";
        j = to_json(job);
        for (const char* store : {"models", "synthetic", "reports"}) {
          if (m[store].contains(job.artifact)) m[store][job.artifact]["state"] = "failed";
        }
      }
      jobs_[id] = job;
    }
  });
}

void Service::worker_loop(std::deque<std::pair<std::string, Task>>& queue) {
  std::unique_lock lock(mutex_);
  for (;;) {
    changed_.wait(lock, [&] { return stopping_ || !queue.empty(); });
    if (stopping_) return;
    auto [job, task] = std::move(queue.front());
    queue.pop_front();
    ++running_;
    lock.unlock();
    try {
      set_state(job, JobState::Running);
      task(job);
      set_state(job, JobState::Done);
    } catch (const std::exception& e) {
      set_state(job, JobState::Failed, e.what());
    }
    lock.lock();
    --running_;
    changed_.notify_all();
  }
}

void Service::wait_idle() {
  std::unique_lock lock(mutex_);
  changed_.wait(lock, [&] { return running_ == 0 && train_queue_.empty() && aux_queue_.empty(); });
}

std::string Service::enqueue(JobKind kind, const std::string& artifact, std::size_t total,
                             std::deque<std::pair<std::string, Task>>& queue, Task task) {
  Job job;
  job.kind = kind;
  job.artifact = artifact;
  job.total = total;
  job.id = content_id(job_kind_name(kind) + ":" + artifact);
  persist_job(job);
  {
    std::lock_guard lock(mutex_);
    jobs_[job.id] = job;
    queue.emplace_back(job.id, std::move(task));
  }
  changed_.notify_all();
  return job.id;
}

void Service::persist_job(const Job& job) {
  json j = to_json(job);
  j.erase("losses");
  const char* store = job.kind == JobKind::Train ? "models" : job.kind == JobKind::Synthesize ? "synthetic" : "reports";
  workspace_.update_manifest([&](json& m) {
    m["jobs"][job.id] = j;
    if (m[store].contains(job.artifact)) m[store][job.artifact]["state"] = job_state_name(job.state);
  });
}

void Service::set_state(const std::string& id, JobState state, const std::string& error) {
  Job snapshot;
  {
    std::lock_guard lock(mutex_);
    Job& job = jobs_.at(id);
    // Forward only; done and failed are terminal.
    if (job.state == JobState::Done || job.state == JobState::Failed || state <= job.state) return;
    job.state = state;
    job.error = error;
    if (state == JobState::Done) job.progress = job.total;
    snapshot = job;
  }
  persist_job(snapshot);
}

std::shared_ptr<const GanModel> Service::model(const std::string& id) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = model_cache_.find(id); it != model_cache_.end()) return it->second;
  }
  auto loaded = std::make_shared<const GanModel>(load_model(workspace_.model_dir(id)));
  std::lock_guard lock(mutex_);
  return model_cache_.emplace(id, std::move(loaded)).first->second;
}

Service::Reply Service::upload_dataset(const std::string& csv) {
  Table table;
  try {
    table = parse_csv(csv);
  } catch (const InputError& e) {
    return error_reply(422, e.what());
  }
  if (table.empty()) return error_reply(422, "dataset has no rows");
  const Schema schema = infer_schema(table);
  std::string id;
  workspace_.update_manifest([&](json& m) {
    id = allocate_id(m, csv);
    write_file_atomic(workspace_.dataset_dir(id) / "data.csv", csv);
    write_file_atomic(workspace_.dataset_dir(id) / "schema.json", to_json(schema).dump(2));
    m["datasets"][id] = {{"rows", table.rows()}, {"columns", table.cols()}};
  });
  return {201, {{"id", id}, {"rows", table.rows()}, {"schema", to_json(schema)}}};
}

Service::Reply Service::get_dataset(const std::string& id) {
  const auto e = entry(workspace_.manifest(), "datasets", id);
  if (!e) return error_reply(404, "unknown dataset " + id);
  return {200, {{"id", id}, {"rows", e->at("rows")}, {"schema", to_json(load_dataset_schema(workspace_, id))}}};
}

Service::Reply Service::put_schema(const std::string& id, const json& body) {
  if (!entry(workspace_.manifest(), "datasets", id)) return error_reply(404, "unknown dataset " + id);
  const Schema current = load_dataset_schema(workspace_, id);
  std::vector<ColumnOverride> overrides;
  try {
    overrides = overrides_from_json(body);
  } catch (const InputError& e) {
    return error_reply(422, e.what());
  }
  for (const auto& o : overrides) {
    if (!current.find(o.column)) return error_reply(404, "unknown column '" + o.column + "'");
  }
  try {
    const Schema updated = apply_overrides(current, overrides);
    const Table table = load_dataset(workspace_, id);
    check_schema_matches(updated, table);
    resolve_target(updated, table);
    write_file_atomic(workspace_.dataset_dir(id) / "schema.json", to_json(updated).dump(2));
    return {200, {{"id", id}, {"schema", to_json(updated)}}};
  } catch (const InputError& e) {
    return error_reply(422, e.what());
  }
}

Service::Reply Service::create_model(const json& body) {
  const std::string dataset = body.value("dataset", "");
  if (!entry(workspace_.manifest(), "datasets", dataset)) return error_reply(404, "unknown dataset '" + dataset + "'");
  if (body.contains("epochs") && !positive_integer(body["epochs"])) return error_reply(422, "epochs must be a positive integer");
  if (body.contains("batch_size") && !positive_integer(body["batch_size"])) {
    return error_reply(422, "batch_size must be a positive integer");
  }

  TrainConfig config;
  Schema schema;
  try {
    if (body.contains("config")) config = train_config_from_json(body["config"]);
    if (body.contains("epochs")) config.epochs = body["epochs"].get<std::size_t>();
    if (body.contains("batch_size")) config.batch_size = body["batch_size"].get<std::size_t>();
    if (body.contains("seed")) config.seed = body["seed"].get<std::uint64_t>();
    if (const auto a = body.find("ablation"); a != body.end()) {
      config.ablation.classifier_on = a->value("classifier", true);
      config.ablation.info_loss_on = a->value("info_loss", true);
      config.ablation.vgm_on = a->value("vgm", true);
    }
    config.validate();

    schema = load_dataset_schema(workspace_, dataset);
    const Table table = load_dataset(workspace_, dataset);
    const std::string problem = body.value("problem_type", "");
    if (body.contains("target")) {
      const ColumnOverride o{body["target"].get<std::string>(), std::nullopt, true, true};
      schema = apply_overrides(schema, std::span(&o, 1));
    }
    if (problem == "none" && schema.target()) {
      const ColumnOverride o{schema.target()->name, std::nullopt, std::nullopt, false};
      schema = apply_overrides(schema, std::span(&o, 1));
    }
    check_schema_matches(schema, table);
    const TargetSpec target = resolve_target(schema, table);
    if (!problem.empty() && parse_problem_kind(problem) != target.kind) {
      return error_reply(422, "problem type '" + problem + "' does not match target (" + problem_kind_name(target.kind) + ")");
    }
  } catch (const InputError& e) {
    return error_reply(422, e.what());
  } catch (const json::exception& e) {
    return error_reply(422, e.what());
  }

  std::string id;
  const json config_json = to_json(config);
  workspace_.update_manifest([&](json& m) {
    id = allocate_id(m, dataset + config_json.dump() + to_json(schema).dump());
    m["models"][id] = {{"dataset", dataset}, {"state", "queued"}, {"config", config_json}, {"schema", to_json(schema)}};
  });
  const std::string job =
      enqueue(JobKind::Train, id, config.epochs, train_queue_, [this, id](const std::string& job_id) { run_training(job_id, id); });
  workspace_.update_manifest([&](json& m) { m["models"][id]["job"] = job; });
  return {202, {{"job", job}, {"model", id}}};
}

void Service::run_training(const std::string& job, const std::string& model_id) {
  const json record = workspace_.manifest()["models"][model_id];
  const std::string dataset = record["dataset"];
  const Schema schema = schema_from_json(record["schema"]);
  const TrainConfig config = train_config_from_json(record["config"]);
  const Table table = load_dataset(workspace_, dataset);
  const TargetSpec target = resolve_target(schema, table);

  Table train = table;
  std::optional<Table> test;
  if (target.kind != ProblemKind::None) {
    auto split = stratified_split(table, target, options_.test_fraction, options_.split_seed);
    train = std::move(split.train);
    test = std::move(split.test);
  }

  std::size_t epochs_run = 0;
  GanModel trained = fit_gan(train, schema, config, [&](const EpochReport& r) {
    Job snapshot;
    bool stop = false;
    {
      std::lock_guard lock(mutex_);
      Job& j = jobs_.at(job);
      j.progress = r.epoch;
      for (const auto& [k, v] : r.losses) j.losses[k].push_back(v);
      snapshot = j;
      stop = stopping_;
    }
    epochs_run = r.epoch;
    persist_job(snapshot);
    return !stop;
  });
  if (epochs_run < config.epochs) throw TrainingError("training interrupted at epoch " + std::to_string(epochs_run));

  const auto dir = workspace_.model_dir(model_id);
  save_model(trained, dir);
  save_csv(train, dir / "train.csv");
  if (test) save_csv(*test, dir / "test.csv");
}

Service::Reply Service::get_model(const std::string& id) {
  const auto e = entry(workspace_.manifest(), "models", id);
  if (!e) return error_reply(404, "unknown model " + id);
  json out = *e;
  out["id"] = id;
  if (out.value("state", "") == "done") out["history"] = model(id)->history.series;
  return {200, out};
}

Service::Reply Service::get_job(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return error_reply(404, "unknown job " + id);
  return {200, to_json(it->second)};
}

Service::Reply Service::synthesize(const std::string& model_id, const json& body) {
  const auto e = entry(workspace_.manifest(), "models", model_id);
  if (!e) return error_reply(404, "unknown model " + model_id);
  if (e->value("state", "") != "done") return error_reply(409, "model " + model_id + " has not finished training");
  if (!body.contains("rows") || !positive_integer(body["rows"])) return error_reply(422, "rows must be a positive integer");
  const std::size_t rows = body["rows"].get<std::size_t>();
  const std::uint64_t seed = body.value("seed", std::uint64_t{0});
  const std::string condition = body.value("condition", "");
  std::optional<ConditionalVector> cond;
  try {
    if (!condition.empty()) cond = parse_condition(*model(model_id), condition);
  } catch (const InputError& ex) {
    return error_reply(422, ex.what());
  }

  std::string id;
  workspace_.update_manifest([&](json& m) {
    id = allocate_id(m, model_id + ":" + std::to_string(rows) + ":" + std::to_string(seed) + ":" + condition);
    m["synthetic"][id] = {{"model", model_id}, {"rows", rows}, {"seed", seed}, {"condition", condition}, {"state", "queued"}};
  });
  const std::string job = enqueue(JobKind::Synthesize, id, rows, aux_queue_, [this, id, model_id, rows, seed, cond](const std::string&) {
    const Table out = tabsynth::synthesize(*model(model_id), rows, seed, cond);
    save_csv(out, workspace_.synthetic_path(id));
  });
  workspace_.update_manifest([&](json& m) { m["synthetic"][id]["job"] = job; });
  return {202, {{"job", job}, {"synthetic", id}}};
}

std::optional<std::string> Service::synthetic_csv(const std::string& id) {
  const auto e = entry(workspace_.manifest(), "synthetic", id);
  if (!e || e->value("state", "") != "done") return std::nullopt;
  return read_file(workspace_.synthetic_path(id));
}

Service::Reply Service::create_report(const json& body) {
  const json manifest = workspace_.manifest();
  const std::string model_id = body.value("model", "");
  const std::string synthetic_id = body.value("synthetic", "");
  const auto m = entry(manifest, "models", model_id);
  if (!m) return error_reply(404, "unknown model '" + model_id + "'");
  const auto s = entry(manifest, "synthetic", synthetic_id);
  if (!s) return error_reply(404, "unknown synthetic dataset '" + synthetic_id + "'");
  if (m->value("state", "") != "done") return error_reply(409, "model " + model_id + " has not finished training");
  if (s->value("state", "") != "done") return error_reply(409, "synthetic dataset " + synthetic_id + " is not ready");

  std::string id;
  workspace_.update_manifest([&](json& mf) {
    id = allocate_id(mf, model_id + ":" + synthetic_id);
    mf["reports"][id] = {{"model", model_id}, {"synthetic", synthetic_id}, {"state", "queued"}};
  });
  const std::string job = enqueue(JobKind::Report, id, 1, aux_queue_, [this, id, model_id, synthetic_id](const std::string&) {
    const auto model_ptr = model(model_id);
    const auto dir = workspace_.model_dir(model_id);
    const Table real = load_csv(dir / "train.csv");
    const Table synth = load_csv(workspace_.synthetic_path(synthetic_id));
    std::optional<Table> test;
    if (std::filesystem::exists(dir / "test.csv")) test = load_csv(dir / "test.csv");
    json report = evaluation_report(real, synth, model_ptr->schema, test ? &*test : nullptr, options_.report);
    report["model"] = model_id;
    report["synthetic"] = synthetic_id;
    write_file_atomic(workspace_.report_path(id), report.dump(1));
  });
  workspace_.update_manifest([&](json& mf) { mf["reports"][id]["job"] = job; });
  return {202, {{"job", job}, {"report", id}}};
}

Service::Reply Service::get_report(const std::string& id) {
  const auto e = entry(workspace_.manifest(), "reports", id);
  if (!e) return error_reply(404, "unknown report " + id);
  if (e->value("state", "") != "done") return error_reply(409, "report " + id + " is not ready");
  return {200, json::parse(read_file(workspace_.report_path(id)))};
}

void Service::mount(httplib::Server& server) {
  using httplib::Request;
  using httplib::Response;
  auto send = [](Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  // Runs a handler, mapping malformed JSON to 400 and unexpected failures to 500.
  auto guarded = [send](std::function<Reply(const Request&)> handler) {
    return [send, handler](const Request& req, Response& res) {
      try {
        send(res, handler(req));
      } catch (const json::exception& e) {
        send(res, error_reply(400, std::string("malformed JSON: ") + e.what()));
      } catch (const InputError& e) {
        send(res, error_reply(422, e.what()));
      } catch (const std::exception& e) {
        send(res, error_reply(500, e.what()));
      }
    };
  };
  auto body_json = [](const Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); };

  server.Get("/health", [send](const Request&, Response& res) { send(res, {200, {{"status", "ok"}}}); });
  server.Post("/datasets", guarded([this](const Request& req) {
                if (req.is_multipart_form_data()) {
                  if (req.has_file("file")) return upload_dataset(req.get_file_value("file").content);
                  if (!req.files.empty()) return upload_dataset(req.files.begin()->second.content);
                  return error_reply(422, "multipart upload has no file part");
                }
                return upload_dataset(req.body);
              }));
  server.Get(R"(/datasets/([0-9a-f]+))", guarded([this](const Request& req) { return get_dataset(req.matches[1]); }));
  server.Put(R"(/datasets/([0-9a-f]+)/schema)",
             guarded([this, body_json](const Request& req) { return put_schema(req.matches[1], body_json(req)); }));
  server.Post("/models", guarded([this, body_json](const Request& req) { return create_model(body_json(req)); }));
  server.Get(R"(/models/([0-9a-f]+))", guarded([this](const Request& req) { return get_model(req.matches[1]); }));
  server.Post(R"(/models/([0-9a-f]+)/synthesize)",
              guarded([this, body_json](const Request& req) { return synthesize(req.matches[1], body_json(req)); }));
  server.Get(R"(/jobs/([0-9a-f]+))", guarded([this](const Request& req) { return get_job(req.matches[1]); }));
  server.Get(R"(/synthetic/([0-9a-f]+)\.csv)", [this, send](const Request& req, Response& res) {
    const auto csv = synthetic_csv(req.matches[1]);
    if (!csv) return send(res, error_reply(404, "unknown or unfinished synthetic dataset"));
    res.set_header("Content-Disposition", "attachment; filename=\"" + std::string(req.matches[1]) + ".csv\"");
    res.set_content(*csv, "text/csv");
  });
  server.Post("/reports", guarded([this, body_json](const Request& req) { return create_report(body_json(req)); }));
  server.Get(R"(/reports/([0-9a-f]+))", guarded([this](const Request& req) { return get_report(req.matches[1]); }));
  server.set_error_handler([send](const Request&, Response& res) {
    if (res.body.empty()) send(res, error_reply(res.status, "not found"));
  });
}

}  // namespace tabsynth
