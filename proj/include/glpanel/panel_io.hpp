#ifndef GLPANEL_PANEL_IO_HPP
#define GLPANEL_PANEL_IO_HPP

#include <iosfwd>
#include <string>

#include "glpanel/panel.hpp"

namespace glpanel {

/// Long format: header `id,t,y,x1,...,xK`, one row per (unit, period), ids and periods
/// starting at 1, reals written with 17 significant digits.
void write_panel_csv(const PanelSample& sample, std::ostream& os);
void write_panel_csv(const PanelSample& sample, const std::string& path);

/// Reads the long format back. Rows may come in any order; the panel must be balanced
/// (every id observed at t = 1..T exactly once). Units keep the order of first appearance.
PanelSample read_panel_csv(std::istream& is);
PanelSample read_panel_csv(const std::string& path);

}  // namespace glpanel

#endif
