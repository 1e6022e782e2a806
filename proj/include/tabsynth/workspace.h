#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace tabsynth {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// Artifact id: the first 20 hex digits of the SHA-256 of `content`.
std::string content_id(std::string_view content);

// Advisory flock held for the object's lifetime. The lock file is created if absent.
class FileLock {
 public:
  // With `wait` false, throws InputError when another process holds the lock.
  FileLock(const std::filesystem::path& path, bool wait);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

// Writes via a sibling temporary file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Directory layout shared by the CLI and the service:
//   datasets/<id>/data.csv, datasets/<id>/schema.json
//   models/<id>/            model bundle plus train/test splits
//   synthetic/<id>.csv
//   reports/<id>.json
//   manifest.json           index of every artifact and job
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path dataset_dir(const std::string& id) const { return root_ / "datasets" / id; }
  std::filesystem::path model_dir(const std::string& id) const { return root_ / "models" / id; }
  std::filesystem::path synthetic_path(const std::string& id) const { return root_ / "synthetic" / (id + ".csv"); }
  std::filesystem::path report_path(const std::string& id) const { return root_ / "reports" / (id + ".json"); }

  // Manifest shape: {"datasets": {}, "models": {}, "synthetic": {}, "reports": {}, "jobs": {}}.
  nlohmann::json manifest() const;
  // Read-modify-write under an exclusive lock shared with other processes.
  void update_manifest(const std::function<void(nlohmann::json&)>& edit) const;

 private:
  std::filesystem::path root_;
};

}  // namespace tabsynth
