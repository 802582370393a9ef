#include "trident/decoder_process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <json.hpp>
#include <map>
#include <random>

#include "trident/errors.hpp"
#include "trident/interchange.hpp"
#include "trident/log.hpp"

namespace trident {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path make_temp_dir() {
  std::random_device rd;
  for (int attempt = 0; attempt < 16; ++attempt) {
    const auto candidate = fs::temp_directory_path() / ("trident-decoder-" + std::to_string(rd()));
    if (fs::create_directory(candidate)) return candidate;
  }
  throw IoError("cannot create a decoder working directory");
}

}  // namespace

std::string encode_decode_request(const DecodeRequest& request, const fs::path& mask_ref) {
  if (!request.prompts) throw ValidationError("decoder request " + std::to_string(request.id) + " has no prompts");
  const auto& p = *request.prompts;
  json j = {{"id", request.id},
            {"image_ref", request.image_ref},
            {"point", {p.point.x, p.point.y, p.point.label}},
            {"box", {p.box.x0, p.box.y0, p.box.x1, p.box.y1}},
            {"mask_ref", mask_ref.string()}};
  return j.dump();
}

SubprocessDecoder::SubprocessDecoder(std::string command, fs::path work_dir, std::chrono::milliseconds timeout)
    : command_(std::move(command)), work_dir_(std::move(work_dir)), timeout_(timeout) {
  if (command_.empty()) throw DecoderError("no decoder command configured");
  if (work_dir_.empty()) {
    work_dir_ = make_temp_dir();
    owns_work_dir_ = true;
  } else {
    fs::create_directories(work_dir_);
  }
  ::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw DecoderError("pipe: " + std::string(std::strerror(errno)));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw DecoderError("pipe: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw DecoderError("fork: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

SubprocessDecoder::~SubprocessDecoder() {
  shutdown();
  if (owns_work_dir_) {
    std::error_code ec;
    fs::remove_all(work_dir_, ec);
  }
}

void SubprocessDecoder::shutdown() {
  if (to_child_ >= 0) ::close(to_child_);
  to_child_ = -1;
  if (from_child_ >= 0) ::close(from_child_);
  from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::vector<DecodeResponse> SubprocessDecoder::decode(std::span<const DecodeRequest> requests) {
  if (pid_ < 0) throw DecoderError("decoder process is not running");
  if (requests.empty()) return {};
  const std::uint64_t batch = batch_++;

  std::string outgoing;
  std::map<std::uint64_t, bool> awaiting;
  for (const auto& r : requests) {
    if (!awaiting.emplace(r.id, true).second) throw ValidationError("duplicate decoder request id " + std::to_string(r.id));
    const auto mask_ref = work_dir_ / ("b" + std::to_string(batch) + "_req" + std::to_string(r.id) + "_mask.trdt");
    write_tensor(from_matrix(r.prompts->mask), mask_ref);
    outgoing += encode_decode_request(r, mask_ref);
    outgoing += '\n';
  }

  std::map<std::uint64_t, DecodeResponse> received;
  std::size_t written = 0;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  char buffer[4096];

  auto handle_line = [&](const std::string& line) {
    if (line.empty()) return;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      log::warn("decoder: ignoring malformed response line: " + std::string(e.what()));
      return;
    }
    if (!j.contains("id") || !j.at("id").is_number_unsigned()) {
      log::warn("decoder: ignoring response without a numeric id");
      return;
    }
    const auto id = j.at("id").get<std::uint64_t>();
    if (!awaiting.count(id)) {
      log::warn("decoder: ignoring response for unknown id " + std::to_string(id));
      return;
    }
    if (received.count(id)) log::warn("decoder: duplicate response for id " + std::to_string(id) + "; keeping the latest");
    DecodeResponse resp;
    resp.id = id;
    if (j.contains("error")) {
      resp.error = j.at("error").is_string() ? j.at("error").get<std::string>() : j.at("error").dump();
    } else if (j.contains("mask_ref") && j.at("mask_ref").is_string()) {
      try {
        const auto t = read_tensor(j.at("mask_ref").get<std::string>(), "decoder mask");
        resp.mask = to_matrix(t);
      } catch (const Error& e) {
        resp.error = e.what();
      }
    } else {
      resp.error = "response has neither mask_ref nor error";
    }
    received[id] = std::move(resp);
  };

  while (received.size() < awaiting.size()) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) throw DecoderError("decoder timed out waiting for responses");
    pollfd fds[2];
    nfds_t n = 0;
    fds[n++] = {from_child_, POLLIN, 0};
    if (written < outgoing.size()) fds[n++] = {to_child_, POLLOUT, 0};
    const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    const int ready = ::poll(fds, n, static_cast<int>(std::min<long long>(wait_ms, 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw DecoderError("poll: " + std::string(std::strerror(errno)));
    }
    if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t w = ::write(to_child_, outgoing.data() + written, outgoing.size() - written);
      if (w < 0 && errno != EAGAIN && errno != EINTR) {
        shutdown();
        throw DecoderError("decoder process closed its input: " + std::string(std::strerror(errno)));
      }
      if (w > 0) written += static_cast<std::size_t>(w);
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t r = ::read(from_child_, buffer, sizeof buffer);
      if (r < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        shutdown();
        throw DecoderError("read from decoder: " + std::string(std::strerror(errno)));
      }
      if (r == 0) {
        shutdown();
        throw DecoderError("decoder process exited before answering every request");
      }
      pending_.append(buffer, static_cast<std::size_t>(r));
      std::size_t pos;
      while ((pos = pending_.find('\n')) != std::string::npos) {
        handle_line(pending_.substr(0, pos));
        pending_.erase(0, pos + 1);
      }
    }
  }

  std::vector<DecodeResponse> out;
  out.reserve(received.size());
  for (auto& [id, resp] : received) out.push_back(std::move(resp));
  return out;
}

}  // namespace trident
