#include "reswm/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace reswm {

namespace {

std::string fmt(const std::string& v) { return v; }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(long long v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void parse(const std::string& s, std::string& out) { out = s; }
void parse(const std::string& s, bool& out) {
  if (s == "true" || s == "1")
    out = true;
  else if (s == "false" || s == "0")
    out = false;
  else
    throw std::invalid_argument("config: bad boolean value '" + s + "'");
}
void parse(const std::string& s, int& out) { out = std::stoi(s); }
void parse(const std::string& s, long long& out) { out = std::stoll(s); }
void parse(const std::string& s, std::uint64_t& out) { out = std::stoull(s); }
void parse(const std::string& s, double& out) { out = std::stod(s); }

}  // namespace

std::string Config::to_text() const {
  std::vector<std::string> lines;
  Config& self = const_cast<Config&>(*this);
  visit_config(self, [&](const char* key, auto& value) { lines.push_back(std::string(key) + "=" + fmt(value)); });
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

Config Config::from_text(const std::string& text) {
  Config c;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  visit_config(c, [&](const char* key, auto& value) {
    auto it = kv.find(key);
    if (it != kv.end()) {
      parse(it->second, value);
      kv.erase(it);
    }
  });
  if (!kv.empty()) throw std::invalid_argument("config: unknown key '" + kv.begin()->first + "'");
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void Config::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << to_text();
}

}  // namespace reswm
