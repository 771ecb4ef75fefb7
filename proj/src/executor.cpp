#include "geofaas/executor.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace geofaas {

namespace {

long long parse_sieve_arg(const std::string& payload) {
  size_t begin = 0;
  size_t end = payload.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(payload[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(payload[end - 1]))) --end;
  long long n = 0;
  const auto [ptr, ec] = std::from_chars(payload.data() + begin, payload.data() + end, n);
  if (ec != std::errc() || ptr != payload.data() + end || begin == end) {
    throw std::runtime_error("sieve: argument must be a decimal integer");
  }
  if (n < 0) throw std::runtime_error("sieve: argument must be non-negative");
  if (n > 100'000'000) throw std::runtime_error("sieve: argument too large");
  return n;
}

}  // namespace

FunctionSpec sieve_function(int max_concurrent) {
  FunctionSpec spec;
  spec.name = "sieve";
  spec.max_concurrent = max_concurrent;
  spec.handler = [](const std::string& payload) {
    const long long n = parse_sieve_arg(payload);
    if (n < 3) return std::string("0");
    std::vector<bool> composite(static_cast<size_t>(n), false);
    long long count = 0;
    for (long long k = 2; k < n; ++k) {
      if (composite[static_cast<size_t>(k)]) continue;
      ++count;
      for (long long m = k * k; m < n; m += k) composite[static_cast<size_t>(m)] = true;
    }
    return std::to_string(count);
  };
  spec.base_cost_ms = [](const std::string& payload) {
    return 3.0 * static_cast<double>(parse_sieve_arg(payload)) / 10000.0;
  };
  return spec;
}

void ExecutorPool::register_function(FunctionSpec spec) {
  if (spec.name.empty() || !spec.handler || !spec.base_cost_ms || spec.max_concurrent < 1) {
    throw std::invalid_argument("executor: incomplete function spec");
  }
  if (functions_.count(spec.name)) {
    throw std::invalid_argument("executor: function '" + spec.name + "' already registered");
  }
  const std::string name = spec.name;
  functions_.emplace(name, Entry{std::move(spec), 0});
}

std::vector<std::string> ExecutorPool::function_names() const {
  std::vector<std::string> names;
  names.reserve(functions_.size());
  for (const auto& [name, _] : functions_) names.push_back(name);
  return names;
}

int ExecutorPool::in_flight(const std::string& name) const {
  const auto it = functions_.find(name);
  return it == functions_.end() ? 0 : it->second.in_flight;
}

int ExecutorPool::capacity(const std::string& name) const {
  const auto it = functions_.find(name);
  return it == functions_.end() ? 0 : it->second.spec.max_concurrent;
}

void ExecutorPool::invoke(const std::string& name, const std::string& payload,
                          InvokeCallback done) {
  const auto it = functions_.find(name);
  if (it == functions_.end()) {
    rt_.schedule(0, [done = std::move(done), name] {
      done({InvokeStatus::FunctionError, "unknown function '" + name + "'"});
    });
    return;
  }
  Entry& entry = it->second;
  if (entry.in_flight >= entry.spec.max_concurrent) {
    rt_.record("exec_refused", {{"fn", name}, {"in_flight", std::to_string(entry.in_flight)}});
    rt_.schedule(0, [done = std::move(done)] {
      done({InvokeStatus::Overloaded, "executor at capacity"});
    });
    return;
  }

  // Admitted: hold a slot for the modeled compute duration, then run the
  // handler. Cost-model failures surface exactly like handler failures.
  ++entry.in_flight;
  std::int64_t cost = 0;
  std::string cost_error;
  try {
    cost = std::llround(entry.spec.base_cost_ms(payload) * multiplier_);
  } catch (const std::exception& e) {
    cost_error = e.what();
  }
  rt_.record("exec_admitted",
             {{"fn", name}, {"cost_ms", std::to_string(cost)}, {"in_flight", std::to_string(entry.in_flight)}});
  rt_.schedule(std::max<std::int64_t>(cost, 0),
               [this, name, payload, cost_error, done = std::move(done)] {
                 Entry& e = functions_.at(name);
                 --e.in_flight;
                 InvokeResult result;
                 if (!cost_error.empty()) {
                   result = {InvokeStatus::FunctionError, cost_error};
                 } else {
                   try {
                     result = {InvokeStatus::Ok, e.spec.handler(payload)};
                   } catch (const std::exception& ex) {
                     result = {InvokeStatus::FunctionError, ex.what()};
                   }
                 }
                 done(std::move(result));
               });
}

ExecutorServer::ExecutorServer(NodeRuntime& rt, ExecutorPool& pool)
    : rt_(rt), router_(rt), pool_(pool) {
  router_.set_acceptor(this);
}

void ExecutorServer::on_accept(ConnId conn) { decoders_[conn]; }

void ExecutorServer::on_data(ConnId conn, std::string_view bytes) {
  auto& decoder = decoders_[conn];
  decoder.feed(bytes);
  while (true) {
    std::optional<Envelope> env;
    try {
      env = decoder.next();
    } catch (const WireError& e) {
      rt_.record("exec_bad_frame", {{"rule", e.rule}});
      router_.forget(conn);
      rt_.close(conn);
      decoders_.erase(conn);
      return;
    }
    if (!env) return;
    if (!std::holds_alternative<ExecRequest>(*env)) continue;  // foreign frames are ignored
    const auto req = std::get<ExecRequest>(std::move(*env));
    pool_.invoke(req.function, req.payload, [this, conn, id = req.req_id](InvokeResult r) {
      ExecResponse resp;
      resp.req_id = id;
      resp.status = r.status;
      resp.output = std::move(r.output);
      rt_.send(conn, encode(resp));
    });
  }
}

void ExecutorServer::on_close(ConnId conn) { decoders_.erase(conn); }

RemoteExecutor::RemoteExecutor(NodeRuntime& rt, ConnRouter& router, std::string address)
    : rt_(rt), router_(router), address_(std::move(address)), req_ids_(rt.host() + "-exec") {}

void RemoteExecutor::invoke(const std::string& function, const std::string& payload,
                            std::int64_t deadline_ms, InvokeCallback done) {
  if (conn_ == kNoConn) {
    open_ = false;
    conn_ = router_.connect(address_, this);
  }
  ExecRequest req;
  req.req_id = req_ids_.next();
  req.function = function;
  req.payload = payload;

  Pending& p = pending_[req.req_id];
  p.done = std::move(done);
  p.timer = rt_.schedule(std::max<std::int64_t>(deadline_ms, 1), [this, id = req.req_id] {
    finish(id, {InvokeStatus::Timeout,
                "no reply from executor " + address_ + " within the deadline"});
  });

  std::string frame = encode(req);
  if (open_) {
    rt_.send(conn_, std::move(frame));
  } else {
    backlog_.push_back(std::move(frame));
  }
}

void RemoteExecutor::on_open(ConnId conn) {
  if (conn != conn_) return;
  open_ = true;
  for (auto& frame : backlog_) rt_.send(conn_, std::move(frame));
  backlog_.clear();
}

void RemoteExecutor::on_data(ConnId conn, std::string_view bytes) {
  if (conn != conn_) return;
  decoder_.feed(bytes);
  while (true) {
    std::optional<Envelope> env;
    try {
      env = decoder_.next();
    } catch (const WireError& e) {
      rt_.record("exec_bad_frame", {{"rule", e.rule}});
      router_.forget(conn_);
      rt_.close(conn_);
      on_close(conn_);
      return;
    }
    if (!env) return;
    if (!std::holds_alternative<ExecResponse>(*env)) continue;
    auto resp = std::get<ExecResponse>(std::move(*env));
    finish(resp.req_id, {resp.status, std::move(resp.output)});
  }
}

void RemoteExecutor::on_close(ConnId) {
  conn_ = kNoConn;
  open_ = false;
  backlog_.clear();
  decoder_ = FrameDecoder();
  // Fail everything in flight; owners decide whether to try elsewhere.
  auto pending = std::move(pending_);
  pending_.clear();
  for (auto& [id, p] : pending) {
    rt_.cancel(p.timer);
    p.done({InvokeStatus::FunctionError, "connection to executor " + address_ + " lost"});
  }
}

void RemoteExecutor::finish(const std::string& req_id, InvokeResult result) {
  const auto it = pending_.find(req_id);
  if (it == pending_.end()) return;  // late reply after timeout: already answered
  Pending p = std::move(it->second);
  pending_.erase(it);
  rt_.cancel(p.timer);
  p.done(std::move(result));
}

}  // namespace geofaas
