#pragma once

#include <string>

namespace ioumatch {

/// Configures the stderr logger from IOUMATCH_LOG (error, info or debug;
/// default info). Unknown values fall back to info with a warning.
void init_logging();

void log_info(const std::string& msg);
void log_debug(const std::string& msg);
void log_error(const std::string& msg);

}  // namespace ioumatch
