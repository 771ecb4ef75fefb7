#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "geofaas/runtime.hpp"
#include "geofaas/wire.hpp"

namespace geofaas {

struct InvokeResult {
  InvokeStatus status = InvokeStatus::Ok;
  std::string output;  // result bytes for Ok, error detail otherwise

  bool operator==(const InvokeResult&) const = default;
};

using InvokeCallback = std::function<void(InvokeResult)>;

/// A deployable function: a pure handler plus its capacity and cost model.
struct FunctionSpec {
  std::string name;
  int max_concurrent = 4;
  /// Computes the result bytes; throws std::exception for a function error.
  std::function<std::string(const std::string& payload)> handler;
  /// Virtual compute duration at multiplier 1.0, in ms.
  std::function<double(const std::string& payload)> base_cost_ms;
};

/// Counts primes strictly below the decimal number in the payload.
/// Base cost: 3 ms per 10000 of the argument.
FunctionSpec sieve_function(int max_concurrent);

/// Admission-controlled function runtime of one node. A call is admitted only
/// while fewer than max_concurrent invocations of that function are in flight;
/// at the limit it is refused as Overloaded, never queued. Completions are
/// delivered asynchronously after the modeled compute time (base cost times
/// this node's multiplier -- cloud hardware 1.0, edge hardware 2.0).
class ExecutorPool {
 public:
  ExecutorPool(NodeRuntime& rt, double compute_multiplier)
      : rt_(rt), multiplier_(compute_multiplier) {}

  void register_function(FunctionSpec spec);
  std::vector<std::string> function_names() const;
  bool has_function(const std::string& name) const { return functions_.count(name) != 0; }
  int in_flight(const std::string& name) const;
  int capacity(const std::string& name) const;

  void invoke(const std::string& name, const std::string& payload, InvokeCallback done);

 private:
  struct Entry {
    FunctionSpec spec;
    int in_flight = 0;
  };

  NodeRuntime& rt_;
  double multiplier_;
  std::map<std::string, Entry> functions_;
};

/// How a bridge reaches one executor. Implementations: in-process pool or a
/// remote executor server spoken to over the wire protocol.
class ExecutorHandle {
 public:
  virtual ~ExecutorHandle() = default;
  virtual void invoke(const std::string& function, const std::string& payload,
                      std::int64_t deadline_ms, InvokeCallback done) = 0;
  virtual std::string describe() const = 0;
};

/// Directly wraps a pool living in the same process (the deadline is unused:
/// local completion is guaranteed by construction).
class InProcExecutor final : public ExecutorHandle {
 public:
  explicit InProcExecutor(ExecutorPool& pool) : pool_(pool) {}
  void invoke(const std::string& function, const std::string& payload, std::int64_t,
              InvokeCallback done) override {
    pool_.invoke(function, payload, std::move(done));
  }
  std::string describe() const override { return "inproc"; }

 private:
  ExecutorPool& pool_;
};

/// Serves a pool to remote bridges: answers ExecRequest frames with
/// ExecResponse frames on every accepted connection. Runs standalone on its
/// host (owns the router acceptor slot).
class ExecutorServer final : public NetClient {
 public:
  ExecutorServer(NodeRuntime& rt, ExecutorPool& pool);

  void on_accept(ConnId conn) override;
  void on_data(ConnId conn, std::string_view bytes) override;
  void on_close(ConnId conn) override;

 private:
  NodeRuntime& rt_;
  ConnRouter router_;
  ExecutorPool& pool_;
  std::map<ConnId, FrameDecoder> decoders_;
};

/// Bridge-side stub for a remote executor server. Opens its connection on
/// first use and queues frames until established. An invocation fails with
/// Timeout when no response arrives within its deadline, and with
/// FunctionError when the connection drops.
class RemoteExecutor final : public NetClient, public ExecutorHandle {
 public:
  RemoteExecutor(NodeRuntime& rt, ConnRouter& router, std::string address);

  void invoke(const std::string& function, const std::string& payload, std::int64_t deadline_ms,
              InvokeCallback done) override;
  std::string describe() const override { return address_; }

  void on_open(ConnId conn) override;
  void on_data(ConnId conn, std::string_view bytes) override;
  void on_close(ConnId conn) override;

 private:
  struct Pending {
    InvokeCallback done;
    std::uint64_t timer = 0;
  };

  void finish(const std::string& req_id, InvokeResult result);

  NodeRuntime& rt_;
  ConnRouter& router_;
  std::string address_;
  ConnId conn_ = kNoConn;
  bool open_ = false;
  std::vector<std::string> backlog_;  // frames queued until the connection opens
  FrameDecoder decoder_;
  MsgIdGen req_ids_;
  std::map<std::string, Pending> pending_;
};

}  // namespace geofaas
