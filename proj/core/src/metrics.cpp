#include "conrad/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace conrad {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void metrics_create(const std::string& path, const std::string& config_hash) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot create metrics file: " + path);
  f << "# config=" << config_hash << "\n" << kMetricsHeader << "\n";
}

void metrics_append(const std::string& path, const MetricsRow& r) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot append metrics: " + path);
  f << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.train_adv_loss) << ','
    << fmt(r.train_cons_loss) << ',' << fmt(r.clean_acc) << ',' << fmt(r.pgd10_acc) << '\n';
  f.flush();
}

std::vector<MetricsRow> metrics_read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open metrics file: " + path);
  std::string line;
  bool header_seen = false;
  std::vector<MetricsRow> rows;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kMetricsHeader)
        throw std::runtime_error("metrics header mismatch in " + path + "; expected: " +
                                 kMetricsHeader);
      header_seen = true;
      continue;
    }
    std::istringstream is(line);
    MetricsRow r;
    char comma;
    if (!(is >> r.epoch >> comma >> r.lr >> comma >> r.train_adv_loss >> comma >>
          r.train_cons_loss >> comma >> r.clean_acc >> comma >> r.pgd10_acc))
      throw std::runtime_error("malformed metrics row in " + path + ": " + line);
    rows.push_back(r);
  }
  if (!header_seen)
    throw std::runtime_error("metrics file has no header: " + path + "; expected: " +
                             kMetricsHeader);
  return rows;
}

std::string metrics_config_hash(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open metrics file: " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("# config=", 0) == 0) return line.substr(9);
    if (!line.empty() && line[0] != '#') break;
  }
  return "";
}

}  // namespace conrad
