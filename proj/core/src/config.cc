#include "stone/config.h"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stone {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("config key '" + std::string(key) +
                                "': not a number: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      out.push_back(to_double("list", token));
      token.clear();
    }
  };
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return out;
}

Config Config::parse(std::string_view text) {
  Config config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto raw = text.substr(
        pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    ++line_no;
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": empty key");
    }
    config.set(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return config;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void Config::set(std::string key, std::string value) {
  entries_[std::move(key)] = std::move(value);
}

bool Config::contains(std::string_view key) const {
  return entries_.find(key) != entries_.end();
}

std::optional<std::string> Config::get(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(std::string_view key,
                               std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

double Config::get_double(std::string_view key, double fallback) const {
  const auto v = get(key);
  return v ? to_double(key, *v) : fallback;
}

std::int64_t Config::get_int(std::string_view key,
                             std::int64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::int64_t value = 0;
  const auto* end = v->data() + v->size();
  const auto [ptr, ec] = std::from_chars(v->data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("config key '" + std::string(key) +
                                "': not an integer: '" + *v + "'");
  }
  return value;
}

bool Config::get_bool(std::string_view key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw std::invalid_argument("config key '" + std::string(key) +
                              "': not a boolean: '" + *v + "'");
}

std::vector<double> Config::get_doubles(std::string_view key,
                                        std::vector<double> fallback) const {
  const auto v = get(key);
  return v ? parse_double_list(*v) : std::move(fallback);
}

std::vector<std::int64_t> Config::get_ints(
    std::string_view key, std::vector<std::int64_t> fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<std::int64_t> out;
  for (double d : parse_double_list(*v)) {
    const auto i = static_cast<std::int64_t>(d);
    if (static_cast<double>(i) != d) {
      throw std::invalid_argument("config key '" + std::string(key) +
                                  "': expected integers");
    }
    out.push_back(i);
  }
  return out;
}

}  // namespace stone
