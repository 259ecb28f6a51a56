#include "ioumatch/log.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace ioumatch {

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_st("ioumatch");
    l->set_pattern("[%l] %v");
    return l;
  }();
  return instance;
}

}  // namespace

void init_logging() {
  const char* env = std::getenv("IOUMATCH_LOG");
  const std::string_view level = env ? env : "info";
  auto l = logger();
  if (level == "error") l->set_level(spdlog::level::err);
  else if (level == "debug") l->set_level(spdlog::level::debug);
  else {
    l->set_level(spdlog::level::info);
    if (level != "info") l->warn("IOUMATCH_LOG='{}' not recognized, using info", level);
  }
}

void log_info(const std::string& msg) { logger()->info(msg); }
void log_debug(const std::string& msg) { logger()->debug(msg); }
void log_error(const std::string& msg) { logger()->error(msg); }

}  // namespace ioumatch
