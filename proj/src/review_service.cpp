#include "inout/review_service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <httplib.h>

#include "inout/errors.hpp"
#include "inout/manifest.hpp"

namespace fs = std::filesystem;

namespace inout {

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::pending: return "pending";
    case Decision::accepted: return "accepted";
    case Decision::rejected: return "rejected";
  }
  return "pending";
}

Decision parse_decision(std::string_view text) {
  if (text == "pending") return Decision::pending;
  if (text == "accepted" || text == "accept") return Decision::accepted;
  if (text == "rejected" || text == "reject") return Decision::rejected;
  throw ValidationError("unknown decision: " + std::string(text));
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "queued";
}

const ReviewSample* ReviewSession::find(std::string_view sample_id) const {
  for (const auto& s : samples) {
    if (s.id == sample_id) return &s;
  }
  return nullptr;
}

nlohmann::json ReviewSession::to_json() const {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& p : prompt_history) history.push_back({{"iteration", p.iteration}, {"prompt", p.prompt}});
  nlohmann::json items = nlohmann::json::array();
  std::size_t accepted = 0, rejected = 0, pending = 0;
  for (const auto& s : samples) {
    items.push_back({{"id", s.id},
                     {"iteration", s.iteration},
                     {"image_ref", s.image_ref},
                     {"digest", s.digest},
                     {"decision", std::string(to_string(s.decision))},
                     {"decided_at", s.decided_at},
                     {"note", s.note}});
    (s.decision == Decision::accepted ? accepted : s.decision == Decision::rejected ? rejected : pending)++;
  }
  return {{"id", id},
          {"status", exported ? "exported" : "open"},
          {"prompt_history", history},
          {"samples", items},
          {"counts", {{"accepted", accepted}, {"rejected", rejected}, {"pending", pending}}},
          {"export", exported ? export_fragment : nlohmann::json(nullptr)}};
}

nlohmann::json GenerationJob::to_json() const {
  return {{"id", id},         {"session", session}, {"iteration", iteration},
          {"prompt", prompt}, {"count", count},     {"seed", seed},
          {"status", std::string(to_string(status))}, {"sample_ids", sample_ids}, {"error", error}};
}

namespace {

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// The single place session state changes; the live path and replay share it.
void apply_event(ReviewSession& s, const nlohmann::json& e) {
  const std::string type = e.at("type");
  if (type == "created") {
    s.id = e.at("session");
    s.prompt_history.push_back({1, e.at("prompt")});
  } else if (type == "samples") {
    const int iteration = e.at("iteration");
    for (const auto& item : e.at("samples")) {
      s.samples.push_back({item.at("id"), iteration, item.at("image_ref"), item.at("digest"), Decision::pending, "", ""});
    }
  } else if (type == "decision") {
    for (auto& sample : s.samples) {
      if (sample.id != e.at("sample").get<std::string>()) continue;
      sample.decision = parse_decision(e.at("decision").get<std::string>());
      sample.decided_at = e.at("at");
      sample.note = e.value("note", "");
    }
  } else if (type == "prompt") {
    s.prompt_history.push_back({e.at("iteration"), e.at("prompt")});
  } else if (type == "exported") {
    s.exported = true;
    s.export_fragment = e.at("fragment");
  } else {
    throw LoadError("review log: unknown event type " + type);
  }
}

std::uint64_t session_number(const std::string& id) {
  const auto dash = id.rfind('-');
  if (dash == std::string::npos) return 0;
  try {
    return std::stoull(id.substr(dash + 1));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

ReviewSession replay_events(const fs::path& events_file) {
  std::ifstream in(events_file);
  if (!in) throw LoadError("cannot open review log " + events_file.string());
  ReviewSession s;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      apply_event(s, nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("review log " + events_file.string() + " line " + std::to_string(n + 1) + ": " + e.what());
    }
    ++n;
  }
  if (n == 0) throw LoadError("review log is empty: " + events_file.string());
  return s;
}

ReviewService::ReviewService(const DiffusionBackend& backend, const LoraAdapter* adapter, ReviewServiceConfig config)
    : backend_(backend), adapter_(adapter), config_(std::move(config)) {
  (void)MergeWeight(config_.alpha);
  const fs::path root = config_.state_dir / "sessions";
  fs::create_directories(root);
  for (const auto& entry : fs::directory_iterator(root)) {
    const fs::path log = entry.path() / "events.jsonl";
    if (!entry.is_directory() || !fs::exists(log)) continue;
    ReviewSession s = replay_events(log);
    next_session_ = std::max(next_session_, session_number(s.id) + 1);
    sessions_.emplace(s.id, std::move(s));
  }
  worker_ = std::thread([this] { worker_loop(); });
}

ReviewService::~ReviewService() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

fs::path ReviewService::session_dir(const std::string& session_id) const {
  return config_.state_dir / "sessions" / session_id;
}

fs::path ReviewService::events_path(const std::string& session_id) const {
  return session_dir(session_id) / "events.jsonl";
}

void ReviewService::append_event(const std::string& session_id, const nlohmann::json& event) {
  fs::create_directories(session_dir(session_id));
  std::ofstream out(events_path(session_id), std::ios::app | std::ios::binary);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error("cannot append to review log of " + session_id);
}

ReviewSession& ReviewService::open_session(const std::string& session_id) {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("no such session: " + session_id);
  if (it->second.exported) throw ConflictError("session " + session_id + " is exported and read-only");
  return it->second;
}

std::string ReviewService::create_session(const std::string& prompt) {
  if (prompt.empty()) throw ValidationError("prompt must be non-empty");
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "session-%04llu", static_cast<unsigned long long>(next_session_++));
  const std::string id = buf;
  const nlohmann::json event = {{"type", "created"}, {"session", id}, {"prompt", prompt}, {"at", now_utc()}};
  append_event(id, event);
  ReviewSession s;
  apply_event(s, event);
  sessions_.emplace(id, std::move(s));
  return id;
}

std::string ReviewService::generate_batch(const std::string& session_id, int count, std::uint64_t seed) {
  if (count < 0) throw ValidationError("count must be >= 0");
  std::lock_guard lock(mutex_);
  ReviewSession& s = open_session(session_id);
  GenerationJob job;
  job.id = "job-" + std::to_string(next_job_++);
  job.session = session_id;
  job.iteration = s.current_iteration();
  job.prompt = s.prompt_history.back().prompt;
  job.count = count;
  job.seed = seed;
  const std::string id = job.id;
  jobs_.emplace(id, std::move(job));
  queue_.push_back(id);
  cv_.notify_all();
  return id;
}

GenerationJob ReviewService::job(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw NotFoundError("no such job: " + job_id);
  return it->second;
}

ReviewSession ReviewService::session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("no such session: " + session_id);
  return it->second;
}

std::vector<std::string> ReviewService::session_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

ReviewSample ReviewService::decide(const std::string& session_id, const std::string& sample_id, Decision decision,
                                   const std::string& note) {
  if (decision == Decision::pending) throw ValidationError("decision must be accepted or rejected");
  std::lock_guard lock(mutex_);
  ReviewSession& s = open_session(session_id);
  const ReviewSample* sample = s.find(sample_id);
  if (!sample) throw NotFoundError("no sample " + sample_id + " in " + session_id);
  if (sample->decision != Decision::pending) {
    throw ConflictError("sample " + sample_id + " is already " + std::string(to_string(sample->decision)));
  }
  const nlohmann::json event = {{"type", "decision"},
                                {"sample", sample_id},
                                {"decision", std::string(to_string(decision))},
                                {"note", note},
                                {"at", now_utc()}};
  append_event(session_id, event);
  apply_event(s, event);
  return *s.find(sample_id);
}

int ReviewService::revise_prompt(const std::string& session_id, const std::string& prompt) {
  if (prompt.empty()) throw ValidationError("prompt must be non-empty");
  std::lock_guard lock(mutex_);
  ReviewSession& s = open_session(session_id);
  const int iteration = s.current_iteration() + 1;
  const nlohmann::json event = {{"type", "prompt"}, {"iteration", iteration}, {"prompt", prompt}, {"at", now_utc()}};
  append_event(session_id, event);
  apply_event(s, event);
  return iteration;
}

nlohmann::json ReviewService::export_accepted(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("no such session: " + session_id);
  ReviewSession& s = it->second;
  if (s.exported) return s.export_fragment;
  std::vector<Sample> accepted;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& r : s.samples) {
    if (r.decision != Decision::accepted) continue;
    Sample sample;
    sample.id = r.id;
    sample.path = r.image_ref;
    sample.label = Label::positive;
    sample.source = Source::diffusion;
    sample.split = Split::train;
    sample.digest = r.digest;
    accepted.push_back(sample);
    entries.push_back({{"id", r.id},
                       {"label", "positive"},
                       {"source", "diffusion"},
                       {"digest", r.digest},
                       {"path", r.image_ref},
                       {"iteration", r.iteration}});
  }
  if (accepted.empty()) throw ValidationError("session " + session_id + " has no accepted samples to export");
  const DatasetManifest fragment(std::move(accepted), config_.resolution, {{"review_session", session_id}});
  write_manifest(session_dir(session_id) / "manifest.jsonl", fragment);
  const nlohmann::json result = {{"session", session_id},
                                 {"manifest", (session_dir(session_id) / "manifest.jsonl").string()},
                                 {"content_hash", fragment.content_hash()},
                                 {"samples", entries}};
  const nlohmann::json event = {{"type", "exported"}, {"fragment", result}, {"at", now_utc()}};
  append_event(session_id, event);
  apply_event(s, event);
  return result;
}

fs::path ReviewService::sample_image_path(const std::string& session_id, const std::string& sample_id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("no such session: " + session_id);
  const ReviewSample* sample = it->second.find(sample_id);
  if (!sample) throw NotFoundError("no sample " + sample_id + " in " + session_id);
  return session_dir(session_id) / sample->image_ref;
}

void ReviewService::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

void ReviewService::worker_loop() {
  std::unique_lock lock(mutex_);
  while (true) {
    cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    if (stopping_) return;
    const std::string id = queue_.front();
    queue_.pop_front();
    busy_ = true;
    jobs_.at(id).status = JobStatus::running;
    lock.unlock();
    run_job(id);
    lock.lock();
    busy_ = false;
    if (queue_.empty()) idle_cv_.notify_all();
  }
}

void ReviewService::run_job(const std::string& job_id) {
  GenerationJob job;
  {
    std::lock_guard lock(mutex_);
    job = jobs_.at(job_id);
  }
  try {
    GenerationRequest request{job.prompt, job.count, job.seed, config_.resolution, Label::positive};
    const auto generated = generate(backend_, adapter_, MergeWeight(config_.alpha), request);

    std::lock_guard lock(mutex_);
    ReviewSession& s = open_session(job.session);
    nlohmann::json items = nlohmann::json::array();
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < generated.size(); ++i) {
      const std::string sid = job.session + "-s" + std::to_string(s.samples.size() + i + 1);
      const Image pixels = quantize8(generated[i].image());
      const std::string ref = "images/" + sid + ".png";
      fs::create_directories(session_dir(job.session) / "images");
      write_png(session_dir(job.session) / ref, pixels);
      items.push_back({{"id", sid}, {"image_ref", ref}, {"digest", image_digest(pixels)}});
      ids.push_back(sid);
    }
    const nlohmann::json event = {{"type", "samples"},    {"job", job.id},  {"iteration", job.iteration},
                                  {"prompt", job.prompt}, {"seed", job.seed}, {"samples", items},
                                  {"at", now_utc()}};
    append_event(job.session, event);
    apply_event(s, event);
    GenerationJob& live = jobs_.at(job_id);
    live.sample_ids = std::move(ids);
    live.status = JobStatus::done;
  } catch (const std::exception& e) {
    std::lock_guard lock(mutex_);
    GenerationJob& live = jobs_.at(job_id);
    live.status = JobStatus::failed;
    live.error = e.what();
  }
}

// ---------------------------------------------------------------------------

struct ReviewServer::Impl {
  ReviewService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ReviewService& s) : service(s) { routes(); }

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static nlohmann::json body_of(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      auto j = nlohmann::json::parse(req.body);
      if (!j.is_object()) throw ValidationError("request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed JSON body: ") + e.what());
    }
  }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      const std::string& token = service.config().token;
      if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token) {
        send_json(res, 401, {{"error", "missing or invalid operator token"}});
        return;
      }
      try {
        f(req, res);
      } catch (const ValidationError& e) {
        send_json(res, 400, {{"error", e.what()}});
      } catch (const NotFoundError& e) {
        send_json(res, 404, {{"error", e.what()}});
      } catch (const ConflictError& e) {
        send_json(res, 409, {{"error", e.what()}});
      } catch (const nlohmann::json::exception& e) {
        send_json(res, 400, {{"error", std::string("bad request field: ") + e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  }

  void routes() {
    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = body_of(req);
                  const std::string id = service.create_session(body.value("prompt", ""));
                  send_json(res, 201, service.session(id).to_json());
                }));
    server.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                 send_json(res, 200, {{"sessions", service.session_ids()}});
               }));
    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, service.session(req.matches[1]).to_json());
               }));
    server.Post(R"(/sessions/([^/]+)/generate)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = body_of(req);
                  const int count = body.value("count", 0);
                  const std::uint64_t seed = body.value("seed", std::uint64_t{0});
                  const std::string job = service.generate_batch(req.matches[1], count, seed);
                  send_json(res, 202, service.job(job).to_json());
                }));
    server.Get(R"(/sessions/([^/]+)/samples/([^/]+)/image)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const fs::path path = service.sample_image_path(req.matches[1], req.matches[2]);
                 std::ifstream in(path, std::ios::binary);
                 if (!in) throw NotFoundError("image file missing for " + std::string(req.matches[2]));
                 std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                 res.status = 200;
                 res.set_content(bytes, "image/png");
               }));
    server.Post(R"(/sessions/([^/]+)/samples/([^/]+)/decision)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = body_of(req);
                  const Decision d = parse_decision(body.value("decision", ""));
                  const ReviewSample s = service.decide(req.matches[1], req.matches[2], d, body.value("note", ""));
                  send_json(res, 200,
                            {{"id", s.id},
                             {"iteration", s.iteration},
                             {"decision", std::string(to_string(s.decision))},
                             {"decided_at", s.decided_at},
                             {"note", s.note}});
                }));
    server.Post(R"(/sessions/([^/]+)/prompt)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = body_of(req);
                  const int iteration = service.revise_prompt(req.matches[1], body.value("prompt", ""));
                  send_json(res, 200, {{"iteration", iteration}});
                }));
    server.Post(R"(/sessions/([^/]+)/export)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  send_json(res, 200, service.export_accepted(req.matches[1]));
                }));
    server.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, service.job(req.matches[1]).to_json());
               }));
  }
};

ReviewServer::ReviewServer(ReviewService& service) : impl_(std::make_unique<Impl>(service)) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool ReviewServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace inout
