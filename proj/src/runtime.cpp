#include "geofaas/runtime.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace geofaas {

namespace {

void check_token(std::string_view what, std::string_view s) {
  if (s.empty()) throw std::invalid_argument("event log: empty " + std::string(what));
  for (const char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      throw std::invalid_argument("event log: whitespace in " + std::string(what) + " '" +
                                  std::string(s) + "'");
    }
  }
}

}  // namespace

void EventLog::record(std::int64_t ts_ms, std::string_view node, std::string_view kind,
                      const Fields& fields) {
  check_token("node", node);
  check_token("kind", kind);
  std::string line = std::to_string(ts_ms);
  line += ' ';
  line += node;
  line += ' ';
  line += kind;
  for (const auto& [k, v] : fields) {
    check_token("field key", k);
    check_token("field value", v);
    if (k.find('=') != std::string::npos) {
      throw std::invalid_argument("event log: '=' in field key '" + k + "'");
    }
    line += ' ';
    line += k;
    line += '=';
    line += v;
  }
  lines_.push_back(std::move(line));
}

std::string EventLog::to_text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

void EventLog::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("event log: cannot write '" + path + "'");
  out << to_text();
}

std::vector<EventLog::Parsed> EventLog::parse(std::string_view text) {
  std::vector<Parsed> out;
  size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;

    Parsed p;
    size_t cursor = 0;
    const auto next_token = [&]() -> std::string_view {
      while (cursor < line.size() && line[cursor] == ' ') ++cursor;
      const size_t start = cursor;
      while (cursor < line.size() && line[cursor] != ' ') ++cursor;
      return line.substr(start, cursor - start);
    };

    const auto ts = next_token();
    const auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), p.ts_ms);
    if (ec != std::errc() || ptr != ts.data() + ts.size()) {
      throw std::invalid_argument("event log: bad timestamp in '" + std::string(line) + "'");
    }
    p.node = std::string(next_token());
    p.kind = std::string(next_token());
    if (p.node.empty() || p.kind.empty()) {
      throw std::invalid_argument("event log: short line '" + std::string(line) + "'");
    }
    while (true) {
      const auto tok = next_token();
      if (tok.empty()) break;
      const auto eq = tok.find('=');
      if (eq == std::string_view::npos) {
        throw std::invalid_argument("event log: field without '=' in '" + std::string(line) + "'");
      }
      p.fields[std::string(tok.substr(0, eq))] = std::string(tok.substr(eq + 1));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace geofaas
