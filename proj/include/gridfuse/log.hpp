#pragma once

#include <spdlog/spdlog.h>

namespace gridfuse {

/// Routes the default logger to stderr at the level named by GRIDFUSE_LOG
/// (trace, debug, info, warn, error, off; default warn).
void init_logging();

}  // namespace gridfuse
