#ifndef STONE_CONFIG_H_
#define STONE_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stone {

// Flat `key = value` configuration. Blank lines and lines starting with '#'
// are ignored; later keys override earlier ones.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool contains(std::string_view key) const;

  std::optional<std::string> get(std::string_view key) const;
  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Comma- or whitespace-separated list of reals.
  std::vector<double> get_doubles(std::string_view key,
                                  std::vector<double> fallback) const;
  std::vector<std::int64_t> get_ints(std::string_view key,
                                     std::vector<std::int64_t> fallback) const;

  const std::map<std::string, std::string, std::less<>>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

std::vector<double> parse_double_list(std::string_view text);

}  // namespace stone

#endif  // STONE_CONFIG_H_
