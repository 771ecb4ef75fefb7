#include "geofaas/registry.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace geofaas {

namespace {

std::string_view strip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// First whitespace-delimited token; advances `s` past it.
std::string_view take_token(std::string_view& s) {
  s = strip(s);
  size_t i = 0;
  while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  const auto tok = s.substr(0, i);
  s.remove_prefix(i);
  return tok;
}

}  // namespace

std::string_view to_string(BrokerTier t) { return t == BrokerTier::Edge ? "edge" : "cloud"; }

BrokerTier broker_tier_from(std::string_view s) {
  if (s == "edge") return BrokerTier::Edge;
  if (s == "cloud") return BrokerTier::Cloud;
  throw std::invalid_argument("registry: unknown tier '" + std::string(s) + "'");
}

Registry::Registry(std::uint64_t version, std::vector<BrokerRecord> records)
    : version_(version), records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(),
            [](const BrokerRecord& a, const BrokerRecord& b) { return a.broker_id < b.broker_id; });
  validate();
}

void Registry::validate() const {
  std::set<std::string> ids;
  size_t clouds = 0;
  for (const auto& r : records_) {
    if (r.broker_id.empty() || r.broker_id.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("registry: broker id must be a non-empty token");
    }
    if (r.address.empty()) {
      throw std::invalid_argument("registry: broker '" + r.broker_id + "' has no address");
    }
    if (!ids.insert(r.broker_id).second) {
      throw std::invalid_argument("registry: duplicate broker id '" + r.broker_id + "'");
    }
    if (r.tier == BrokerTier::Cloud) {
      ++clouds;
      if (r.area.kind() != Geofence::Kind::World) {
        throw std::invalid_argument("registry: the cloud broker must cover the whole world");
      }
    } else if (r.area.kind() == Geofence::Kind::World) {
      throw std::invalid_argument("registry: edge broker '" + r.broker_id +
                                  "' must not cover the whole world");
    }
  }
  if (clouds != 1) {
    throw std::invalid_argument("registry: expected exactly one cloud broker, found " +
                                std::to_string(clouds));
  }
  for (size_t i = 0; i < records_.size(); ++i) {
    for (size_t j = i + 1; j < records_.size(); ++j) {
      const auto& a = records_[i];
      const auto& b = records_[j];
      if (a.tier != BrokerTier::Edge || b.tier != BrokerTier::Edge) continue;
      if (!fences_disjoint(a.area, b.area)) {
        throw std::invalid_argument("registry: edge areas of '" + a.broker_id + "' and '" +
                                    b.broker_id + "' overlap");
      }
    }
  }
}

const BrokerRecord* Registry::find(std::string_view broker_id) const {
  for (const auto& r : records_) {
    if (r.broker_id == broker_id) return &r;
  }
  return nullptr;
}

const BrokerRecord& Registry::cloud() const {
  for (const auto& r : records_) {
    if (r.tier == BrokerTier::Cloud) return r;
  }
  throw std::logic_error("registry: no cloud broker (unvalidated registry?)");
}

const BrokerRecord& Registry::responsible_broker(GeoPoint p) const {
  const BrokerRecord* best = nullptr;
  for (const auto& r : records_) {
    if (r.tier != BrokerTier::Edge || !r.area.contains(p)) continue;
    if (!best || r.broker_id < best->broker_id) best = &r;
  }
  return best ? *best : cloud();
}

std::string Registry::to_text() const {
  std::ostringstream os;
  os << "version " << version_ << "\n";
  for (const auto& r : records_) {
    os << "broker " << r.broker_id << " " << r.address << " " << to_string(r.tier) << " "
       << r.area.to_text() << "\n";
  }
  return os.str();
}

Registry Registry::parse(std::string_view text) {
  std::optional<std::uint64_t> version;
  std::vector<BrokerRecord> records;

  size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = strip(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    const auto fail = [&](const std::string& why) {
      throw std::invalid_argument("registry line " + std::to_string(line_no) + ": " + why);
    };

    const auto keyword = take_token(line);
    if (keyword == "version") {
      if (version) fail("duplicate version line");
      const auto tok = take_token(line);
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !strip(line).empty()) {
        fail("expected 'version <n>'");
      }
      version = v;
    } else if (keyword == "broker") {
      BrokerRecord r;
      r.broker_id = std::string(take_token(line));
      r.address = std::string(take_token(line));
      const auto tier = take_token(line);
      if (r.broker_id.empty() || r.address.empty() || tier.empty()) {
        fail("expected 'broker <id> <address> <tier> <area>'");
      }
      r.tier = broker_tier_from(tier);
      const auto area = strip(line);
      if (area.empty()) fail("missing area");
      r.area = Geofence::parse(area);
      records.push_back(std::move(r));
    } else {
      fail("unknown keyword '" + std::string(keyword) + "'");
    }
  }
  if (!version) throw std::invalid_argument("registry: missing version line");
  return Registry(*version, std::move(records));
}

Registry Registry::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("registry: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Registry::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("registry: cannot write '" + path + "'");
  out << to_text();
}

}  // namespace geofaas
