#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "inout/diffusion.hpp"
#include "inout/lora.hpp"

namespace inout {

enum class Decision { pending, accepted, rejected };
std::string_view to_string(Decision d);
Decision parse_decision(std::string_view text);

struct PromptEntry {
  int iteration = 0;
  std::string prompt;
};

struct ReviewSample {
  std::string id;
  int iteration = 0;
  std::string image_ref;  // relative to the session directory
  std::string digest;
  Decision decision = Decision::pending;
  std::string decided_at;
  std::string note;
};

struct ReviewSession {
  std::string id;
  std::vector<PromptEntry> prompt_history;
  std::vector<ReviewSample> samples;
  bool exported = false;
  nlohmann::json export_fragment;  // set once exported

  int current_iteration() const { return prompt_history.empty() ? 0 : prompt_history.back().iteration; }
  const ReviewSample* find(std::string_view sample_id) const;
  nlohmann::json to_json() const;
};

// Rebuilds a session from its event log.
ReviewSession replay_events(const std::filesystem::path& events_file);

enum class JobStatus { queued, running, done, failed };
std::string_view to_string(JobStatus s);

struct GenerationJob {
  std::string id;
  std::string session;
  int iteration = 0;
  std::string prompt;
  int count = 0;
  std::uint64_t seed = 0;
  JobStatus status = JobStatus::queued;
  std::vector<std::string> sample_ids;
  std::string error;
  nlohmann::json to_json() const;
};

struct ReviewServiceConfig {
  std::filesystem::path state_dir = "review_state";
  Resolution resolution{32, 96};
  double alpha = 0.6;
  std::string token;  // when set, requests need "Authorization: Bearer <token>"
};

// Session store for the operator review loop. Every state change is appended
// to <state_dir>/sessions/<id>/events.jsonl before it becomes visible;
// existing logs are replayed on construction. Generation runs on a
// background worker; all other operations complete synchronously.
class ReviewService {
 public:
  // `adapter` may be null (base model). Both must outlive the service.
  ReviewService(const DiffusionBackend& backend, const LoraAdapter* adapter, ReviewServiceConfig config);
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  std::string create_session(const std::string& prompt);
  std::string generate_batch(const std::string& session_id, int count, std::uint64_t seed);
  GenerationJob job(const std::string& job_id) const;
  ReviewSession session(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  ReviewSample decide(const std::string& session_id, const std::string& sample_id, Decision decision,
                      const std::string& note = {});
  int revise_prompt(const std::string& session_id, const std::string& prompt);
  nlohmann::json export_accepted(const std::string& session_id);
  std::filesystem::path sample_image_path(const std::string& session_id, const std::string& sample_id) const;
  std::filesystem::path events_path(const std::string& session_id) const;

  // Blocks until no job is queued or running.
  void wait_idle();
  const ReviewServiceConfig& config() const { return config_; }

 private:
  void worker_loop();
  void run_job(const std::string& job_id);
  void append_event(const std::string& session_id, const nlohmann::json& event);
  ReviewSession& open_session(const std::string& session_id);
  std::filesystem::path session_dir(const std::string& session_id) const;

  const DiffusionBackend& backend_;
  const LoraAdapter* adapter_;
  ReviewServiceConfig config_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, ReviewSession> sessions_;
  std::map<std::string, GenerationJob> jobs_;
  std::deque<std::string> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::uint64_t next_session_ = 1;
  std::uint64_t next_job_ = 1;
  std::thread worker_;
};

// JSON-over-HTTP front end for a ReviewService.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewService& service);
  ~ReviewServer();

  // Binds (port 0: any free port) and serves on a background thread. Returns the bound port.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace inout
