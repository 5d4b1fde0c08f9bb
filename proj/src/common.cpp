#include "splatdrive/common.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string_view>
#include <thread>
#include <vector>

namespace splatdrive {

Se3 se3_from_row_major(const double* v) {
  Se3 p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[r * 4 + c];
    p.translation(r) = v[r * 4 + 3];
  }
  return p;
}

void se3_to_row_major(const Se3& pose, double* v) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[r * 4 + c] = pose.rotation(r, c);
    v[r * 4 + 3] = pose.translation(r);
  }
}

Mat3 yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

namespace {
std::atomic<int> g_default_workers{1};
}

int default_workers() { return g_default_workers.load(); }

void set_default_workers(int workers) {
  g_default_workers.store(std::max(1, workers));
}

void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (workers <= 0) workers = default_workers();
  workers = static_cast<int>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    fn(0, count, 0);
    return;
  }
  std::vector<std::jthread> threads;
  threads.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    threads.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
}

void init_logging() {
  const char* env = std::getenv("SPLATDRIVE_LOG");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (env != nullptr) {
    const std::string_view v(env);
    if (v == "error") level = spdlog::level::err;
    else if (v == "warn") level = spdlog::level::warn;
    else if (v == "info") level = spdlog::level::info;
    else if (v == "debug") level = spdlog::level::debug;
  }
  static const auto logger = [] {
    auto l = spdlog::stderr_color_mt("splatdrive");
    spdlog::set_default_logger(l);
    return l;
  }();
  (void)logger;
  spdlog::set_level(level);
}

}  // namespace splatdrive
