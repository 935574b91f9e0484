#pragma once

#include <string>

namespace pivc {

/// Renders static SVG plots (time-domain tracking and Bode overlays) from
/// the CSV/JSON artifacts of an evaluate run directory.
void render_run_report(const std::string& run_dir);

}  // namespace pivc
