#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geofaas/geo.hpp"

namespace geofaas {

enum class BrokerTier { Edge, Cloud };

std::string_view to_string(BrokerTier t);
BrokerTier broker_tier_from(std::string_view s);

/// One row of the shared broker registry distributed to every node.
struct BrokerRecord {
  std::string broker_id;
  std::string address;  // "host:port" (TCP) or a simulated host name
  BrokerTier tier = BrokerTier::Edge;
  Geofence area = Geofence::world();

  bool operator==(const BrokerRecord&) const = default;
};

/// Static deployment map: disjoint edge areas plus exactly one world-covering
/// cloud broker. Every position therefore has a well-defined responsible broker.
class Registry {
 public:
  Registry() = default;
  Registry(std::uint64_t version, std::vector<BrokerRecord> records);

  std::uint64_t version() const { return version_; }
  const std::vector<BrokerRecord>& records() const { return records_; }

  const BrokerRecord* find(std::string_view broker_id) const;
  const BrokerRecord& cloud() const;

  /// The broker in charge of `p`: the edge broker whose area contains it, or the
  /// cloud broker when no edge area does. Ties (only possible on shared
  /// boundaries) go to the lexicographically smallest broker id.
  const BrokerRecord& responsible_broker(GeoPoint p) const;

  /// Text form, one record per line:
  ///   version <n>
  ///   broker <id> <address> <edge|cloud> <area-text>
  std::string to_text() const;
  static Registry parse(std::string_view text);
  static Registry load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const Registry&) const = default;

 private:
  void validate() const;

  std::uint64_t version_ = 0;
  std::vector<BrokerRecord> records_;
};

}  // namespace geofaas
