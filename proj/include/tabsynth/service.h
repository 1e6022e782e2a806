#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "tabsynth/gan.h"
#include "tabsynth/report.h"
#include "tabsynth/workspace.h"

namespace httplib {
class Server;
}

namespace tabsynth {

struct ServiceOptions {
  // Share of each dataset held out (stratified on the target) for ML utility.
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  ReportOptions report;
};

enum class JobKind { Train, Synthesize, Report };
enum class JobState { Queued, Running, Done, Failed };

std::string job_kind_name(JobKind kind);
std::string job_state_name(JobState state);

struct Job {
  std::string id;
  JobKind kind = JobKind::Train;
  JobState state = JobState::Queued;
  std::size_t progress = 0;  // epochs for training, rows for synthesis
  std::size_t total = 0;
  std::string error;
  std::string artifact;  // model, synthetic or report id
  std::map<std::string, std::vector<double>> losses;  // training only, per epoch
};

nlohmann::json to_json(const Job& job);

// HTTP+JSON facade over a workspace. Training jobs run FIFO on one dedicated worker;
// synthesis and report jobs run FIFO on a second worker so they are not starved by a
// long training run. Every completed artifact is recorded in the workspace manifest,
// which a new instance reads back on start.
class Service {
 public:
  explicit Service(std::filesystem::path workspace, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void mount(httplib::Server& server);

  // Blocks until both queues are empty and no job is running.
  void wait_idle();

  struct Reply {
    int status = 200;
    nlohmann::json body;
  };
  // Transport-independent handlers; `mount` binds them to routes.
  Reply upload_dataset(const std::string& csv);
  Reply get_dataset(const std::string& id);
  Reply put_schema(const std::string& id, const nlohmann::json& body);
  Reply create_model(const nlohmann::json& body);
  Reply get_model(const std::string& id);
  Reply get_job(const std::string& id);
  Reply synthesize(const std::string& model_id, const nlohmann::json& body);
  // Empty when the id is unknown or not ready.
  std::optional<std::string> synthetic_csv(const std::string& id);
  Reply create_report(const nlohmann::json& body);
  Reply get_report(const std::string& id);

 private:
  using Task = std::function<void(const std::string& job)>;

  Workspace workspace_;
  ServiceOptions options_;

  std::mutex mutex_;
  std::condition_variable changed_;
  std::map<std::string, Job> jobs_;
  std::deque<std::pair<std::string, Task>> train_queue_;
  std::deque<std::pair<std::string, Task>> aux_queue_;
  std::size_t running_ = 0;
  bool stopping_ = false;
  std::map<std::string, std::shared_ptr<const GanModel>> model_cache_;

  std::thread train_worker_;
  std::thread aux_worker_;

  void recover();
  void worker_loop(std::deque<std::pair<std::string, Task>>& queue);
  std::string enqueue(JobKind kind, const std::string& artifact, std::size_t total,
                      std::deque<std::pair<std::string, Task>>& queue, Task task);
  void set_state(const std::string& job, JobState state, const std::string& error = {});
  void persist_job(const Job& job);
  std::shared_ptr<const GanModel> model(const std::string& id);

  void run_training(const std::string& job, const std::string& model_id);
};

}  // namespace tabsynth
