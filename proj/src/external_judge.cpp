#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <iostream>

#include "emr/expert.hpp"

namespace emr {

std::string encode_rle(const std::vector<std::uint8_t>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < values.size()) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    if (!out.empty()) out += ',';
    out += std::to_string(values[i]) + ':' + std::to_string(j - i);
    i = j;
  }
  return out;
}

std::vector<std::uint8_t> decode_rle(const std::string& text) {
  std::vector<std::uint8_t> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t colon = text.find(':', pos);
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    if (colon == std::string::npos || colon > comma) fail(ErrorKind::protocol, "bad RLE run");
    try {
      const unsigned long v = std::stoul(text.substr(pos, colon - pos));
      const unsigned long n = std::stoul(text.substr(colon + 1, comma - colon - 1));
      if (v > 255) fail(ErrorKind::protocol, "RLE value out of range");
      out.insert(out.end(), n, std::uint8_t(v));
    } catch (const std::logic_error&) {
      fail(ErrorKind::protocol, "bad RLE number");
    }
    pos = comma + 1;
  }
  return out;
}

Json make_judge_request(const std::string& id, const JudgeRequest& r) {
  const Projection2D a = front_view_projection(*r.volume, *r.first);
  const Projection2D b = front_view_projection(*r.volume, *r.second);
  return {{"id", id},
          {"case_id", r.case_id},
          {"structure", r.prior->name},
          {"prompt", r.prior->prompt},
          {"overlay_a_rle", encode_rle(a.overlay)},
          {"overlay_b_rle", encode_rle(b.overlay)},
          {"width", a.width},
          {"height", a.height}};
}

ExternalJudge::ExternalJudge(std::string command, int timeout_ms, double tie_epsilon)
    : command_(std::move(command)), timeout_ms_(timeout_ms), fallback_(tie_epsilon) {
  if (command_.empty()) fail(ErrorKind::config, "external judge command is empty");
  if (timeout_ms_ <= 0) fail(ErrorKind::config, "external judge timeout must be positive");
  // A judge that exits early must surface as a failed write, not kill us.
  ::signal(SIGPIPE, SIG_IGN);
}

ExternalJudge::~ExternalJudge() { stop(); }

void ExternalJudge::start() {
  int in[2], out[2];
  if (::pipe(in) != 0 || ::pipe(out) != 0) fail(ErrorKind::io, "external judge: pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) fail(ErrorKind::io, "external judge: fork failed");
  if (pid == 0) {
    // Own process group so stop() also reaches whatever the shell spawned.
    ::setpgid(0, 0);
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    ::close(in[0]);
    ::close(in[1]);
    ::close(out[0]);
    ::close(out[1]);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in[0]);
  ::close(out[1]);
  ::fcntl(in[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(out[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in[1];
  from_child_ = out[0];
  pending_.clear();
}

void ExternalJudge::stop() {
  if (pid_ < 0) return;
  ::close(to_child_);
  ::close(from_child_);
  ::kill(-pid_, SIGKILL);
  ::waitpid(pid_, nullptr, 0);
  pid_ = to_child_ = from_child_ = -1;
  pending_.clear();
}

std::optional<std::string> ExternalJudge::exchange(const std::string& line, bool& timed_out) {
  timed_out = false;
  if (pid_ < 0) start();
  const std::string msg = line + "\n";
  std::size_t sent = 0;
  while (sent < msg.size()) {
    const ssize_t n = ::write(to_child_, msg.data() + sent, msg.size() - sent);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      return std::nullopt;
    }
    sent += std::size_t(n);
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
  while (true) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return reply;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      stop();
      return std::nullopt;
    }
    pollfd p{from_child_, POLLIN, 0};
    const int rc = ::poll(&p, 1, int(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) continue;
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      return std::nullopt;
    }
    pending_.append(buf, std::size_t(n));
  }
}

JudgeVerdict ExternalJudge::judge(const JudgeRequest& request) {
  std::lock_guard lock(mutex_);
  const std::string id = request.case_id + "/" + request.prior->name + "/" + std::to_string(next_id_++);
  bool timed_out = false;
  const auto reply = exchange(make_judge_request(id, request).dump(), timed_out);
  if (timed_out) {
    ++timeouts_;
    std::cerr << "warning: external judge timed out on " << id << "; counting a tie\n";
    JudgeVerdict v;
    v.source = VerdictSource::external;
    v.timed_out = true;
    v.note = "timeout";
    return v;
  }
  std::string problem;
  if (!reply) {
    problem = "judge process closed its output";
  } else {
    try {
      const Json j = Json::parse(*reply);
      if (!j.is_object() || j.value("id", std::string()) != id)
        problem = "reply id does not match request";
      else {
        JudgeVerdict v;
        v.preference = parse_preference(j.at("preference").get<std::string>());
        v.source = VerdictSource::external;
        return v;
      }
    } catch (const Json::exception& e) {
      problem = std::string("malformed reply: ") + e.what();
    } catch (const Error& e) {
      problem = e.what();
    }
  }
  ++protocol_failures_;
  stop();  // resynchronize with a fresh process
  std::cerr << "warning: external judge protocol error on " << id << " (" << problem
            << "); using the rule judge\n";
  JudgeVerdict v = fallback_.judge(request);
  v.source = VerdictSource::fallback;
  v.protocol_failure = true;
  v.note = problem;
  return v;
}

}  // namespace emr
