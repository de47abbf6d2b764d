#pragma once

#include <string>
#include <vector>

namespace conrad {

/// One row of the per-epoch metrics table. Accuracies are percentages.
struct MetricsRow {
  int epoch = 0;
  double lr = 0.0;
  double train_adv_loss = 0.0;
  double train_cons_loss = 0.0;
  double clean_acc = 0.0;
  double pgd10_acc = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,lr,train_adv_loss,train_cons_loss,clean_acc,pgd10_acc";

/// Creates the file with a config-hash comment and the header.
void metrics_create(const std::string& path, const std::string& config_hash);

/// Appends one row and flushes, so each epoch lands atomically.
void metrics_append(const std::string& path, const MetricsRow& row);

/// Reads a metrics table; comment lines are tolerated, a wrong header is an
/// error naming the expected columns.
std::vector<MetricsRow> metrics_read(const std::string& path);

std::string metrics_config_hash(const std::string& path);

}  // namespace conrad
