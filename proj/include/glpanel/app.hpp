#ifndef GLPANEL_APP_HPP
#define GLPANEL_APP_HPP

#include <functional>
#include <iosfwd>

#include "glpanel/config.hpp"

namespace glpanel {

/// Run `fn(i)` for i in [0, count) on `threads` workers. Work is handed out by index, so
/// results written by index do not depend on the thread count.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

/// Dispatch one subcommand and write its artifacts under cfg.out.
/// Returns 0 on success, 2 when the estimate is flagged as ambiguous (several minima),
/// 1 on error (the message goes to `log`).
int run(const RunConfig& cfg, std::ostream& log);

}  // namespace glpanel

#endif
