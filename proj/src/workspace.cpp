#include "tabsynth/workspace.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tabsynth/error.h"

namespace tabsynth {

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string content_id(std::string_view content) { return sha256_hex(content).substr(0, 20); }

FileLock::FileLock(const std::filesystem::path& path, bool wait) {
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw InputError("cannot open lock file " + path.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | (wait ? 0 : LOCK_NB)) != 0) {
    const int err = errno;
    ::close(fd_);
    fd_ = -1;
    if (err == EWOULDBLOCK) throw InputError(path.parent_path().string() + " is locked by another process");
    throw InputError("cannot lock " + path.string() + ": " + std::strerror(err));
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InputError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

nlohmann::json empty_manifest() {
  return {{"datasets", nlohmann::json::object()}, {"models", nlohmann::json::object()},
          {"synthetic", nlohmann::json::object()}, {"reports", nlohmann::json::object()},
          {"jobs", nlohmann::json::object()}};
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return empty_manifest();
  try {
    auto j = nlohmann::json::parse(read_file(path));
    const auto defaults = empty_manifest();
    for (const auto& [key, value] : defaults.items()) {
      if (!j.contains(key)) j[key] = value;
    }
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("corrupt manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace

Workspace::Workspace(std::filesystem::path root) : root_(std::move(root)) {
  for (const char* sub : {"datasets", "models", "synthetic", "reports"}) {
    std::filesystem::create_directories(root_ / sub);
  }
}

nlohmann::json Workspace::manifest() const {
  FileLock lock(root_ / "manifest.lock", true);
  return read_manifest(root_ / "manifest.json");
}

void Workspace::update_manifest(const std::function<void(nlohmann::json&)>& edit) const {
  FileLock lock(root_ / "manifest.lock", true);
  auto j = read_manifest(root_ / "manifest.json");
  edit(j);
  write_file_atomic(root_ / "manifest.json", j.dump(2));
}

}  // namespace tabsynth
