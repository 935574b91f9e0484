#include "pivc/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "pivc/experiment.hpp"
#include "pivc/lti.hpp"
#include "pivc/signal.hpp"

namespace pivc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Series {
  std::vector<double> x, y;
  std::string color;
  std::string label;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<Series>& series, bool logx) {
  const double width = 720, height = 420;
  const double x0 = 64, x1 = width - 16, y0 = height - 48, y1 = 28;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double xv = logx ? std::log10(std::max(s.x[i], 1e-12)) : s.x[i];
      xmin = std::min(xmin, xv);
      xmax = std::max(xmax, xv);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!(xmax > xmin)) {
    xmax = xmin + 1;
  }
  if (!(ymax > ymin)) {
    ymax = ymin + 1;
  }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const auto px = [&](double x) {
    const double v = logx ? std::log10(std::max(x, 1e-12)) : x;
    return x0 + (v - xmin) / (xmax - xmin) * (x1 - x0);
  };
  const auto py = [&](double y) { return y0 - (y - ymin) / (ymax - ymin) * (y0 - y1); };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << width / 2 << "' y='18' text-anchor='middle' font-size='14'>" << title << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double gx = x0 + (x1 - x0) * i / 5.0;
    svg << "<line x1='" << gx << "' y1='" << y1 << "' x2='" << gx << "' y2='" << y0
        << "' stroke='#dddddd'/>\n";
    svg << "<text x='" << gx << "' y='" << y0 + 16 << "' text-anchor='middle' font-size='10'>"
        << fmt(logx ? std::pow(10.0, fx) : fx) << "</text>\n";
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    const double gy = py(fy);
    svg << "<line x1='" << x0 << "' y1='" << gy << "' x2='" << x1 << "' y2='" << gy
        << "' stroke='#dddddd'/>\n";
    svg << "<text x='" << x0 - 6 << "' y='" << gy + 3 << "' text-anchor='end' font-size='10'>" << fmt(fy)
        << "</text>\n";
  }
  svg << "<rect x='" << x0 << "' y='" << y1 << "' width='" << x1 - x0 << "' height='" << y0 - y1
      << "' fill='none' stroke='black'/>\n";
  svg << "<text x='" << (x0 + x1) / 2 << "' y='" << height - 10 << "' text-anchor='middle' font-size='12'>"
      << xlabel << "</text>\n";
  svg << "<text x='16' y='" << (y0 + y1) / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
      << (y0 + y1) / 2 << ")'>" << ylabel << "</text>\n";

  double ly = y1 + 14;
  for (const auto& s : series) {
    svg << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) svg << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    svg << "'/>\n";
    svg << "<line x1='" << x1 - 150 << "' y1='" << ly << "' x2='" << x1 - 126 << "' y2='" << ly
        << "' stroke='" << s.color << "' stroke-width='2'/>\n";
    svg << "<text x='" << x1 - 120 << "' y='" << ly + 4 << "' font-size='11'>" << s.label << "</text>\n";
    ly += 16;
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  out << svg.str();
}

std::string controller_color(const std::string& name) {
  if (name == "ifir_passive") return "#d62728";
  if (name == "pid") return "#1f77b4";
  if (name == "ifir_unconstrained") return "#7f7f7f";
  return "#2ca02c";
}

}  // namespace

void render_run_report(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("report: run directory not found: " + run_dir);

  std::optional<ContinuousTf> m_r;
  if (fs::exists(run_dir + "/config.json")) {
    std::ifstream in(run_dir + "/config.json");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      const ExperimentConfig cfg = config_from_json_text(ss.str());
      m_r = cfg.reference_model.build(1);
    } catch (const std::exception&) {
      // Config optional for rendering; Bode overlay is skipped without it.
    }
  }

  std::vector<fs::path> scenario_dirs;
  for (const auto& entry : fs::directory_iterator(run_dir))
    if (entry.is_directory()) scenario_dirs.push_back(entry.path());
  std::sort(scenario_dirs.begin(), scenario_dirs.end());

  for (const auto& sdir : scenario_dirs) {
    std::vector<fs::path> ctrl_dirs;
    for (const auto& entry : fs::directory_iterator(sdir))
      if (entry.is_directory() && fs::exists(entry.path() / "signals.csv")) ctrl_dirs.push_back(entry.path());
    std::sort(ctrl_dirs.begin(), ctrl_dirs.end());
    if (ctrl_dirs.empty()) continue;

    const std::string scenario = sdir.filename().string();

    // Time-domain overlay: target from the first controller record.
    bool have_tracking = false;
    std::vector<Series> tracking;
    bool have_bode = false;
    std::vector<Series> bode_mag, bode_phase;

    for (std::size_t ci = 0; ci < ctrl_dirs.size(); ++ci) {
      const std::string cname = ctrl_dirs[ci].filename().string();
      std::vector<std::string> names;
      const Signal sig = read_signal_csv((ctrl_dirs[ci] / "signals.csv").string(), &names);
      if (sig.length() > 2) {
        Eigen::Index ystar_col = -1, y_col = -1;
        for (Eigen::Index c = 0; c < sig.channels(); ++c) {
          if (names[static_cast<std::size_t>(c)] == "ystar_0") ystar_col = c;
          if (names[static_cast<std::size_t>(c)] == "y_0") y_col = c;
        }
        if (ystar_col >= 0 && y_col >= 0) {
          if (!have_tracking) {
            Series target;
            target.color = "#000000";
            target.label = "target";
            for (Eigen::Index k = 0; k < sig.length(); ++k) {
              target.x.push_back(sig.time_at(k));
              target.y.push_back(sig.samples(k, ystar_col));
            }
            tracking.push_back(std::move(target));
            have_tracking = true;
          }
          Series s;
          s.color = controller_color(cname);
          s.label = cname;
          for (Eigen::Index k = 0; k < sig.length(); ++k) {
            s.x.push_back(sig.time_at(k));
            s.y.push_back(sig.samples(k, y_col));
          }
          tracking.push_back(std::move(s));
        }
      }
      const fs::path bode_csv = ctrl_dirs[ci] / "bode.csv";
      if (fs::exists(bode_csv)) {
        Series mag, ph;
        mag.color = ph.color = controller_color(cname);
        mag.label = ph.label = cname;
        std::ifstream in(bode_csv);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
          double w, g, p;
          int div;
          if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &w, &g, &p, &div) == 4 && !div) {
            mag.x.push_back(w);
            mag.y.push_back(g);
            ph.x.push_back(w);
            ph.y.push_back(p);
          }
        }
        if (!mag.x.empty()) {
          bode_mag.push_back(std::move(mag));
          bode_phase.push_back(std::move(ph));
          have_bode = true;
        }
      }
    }

    if (have_tracking)
      write_svg_plot((sdir / ("tracking_" + scenario + ".svg")).string(), "Tracking: " + scenario,
                     "time [s]", "velocity", tracking, false);
    if (have_bode) {
      if (m_r && !bode_mag.empty()) {
        Series ref_mag, ref_phase;
        ref_mag.color = ref_phase.color = "#000000";
        ref_mag.label = ref_phase.label = "reference model";
        const double lo = *std::min_element(bode_mag[0].x.begin(), bode_mag[0].x.end());
        const double hi = *std::max_element(bode_mag[0].x.begin(), bode_mag[0].x.end());
        for (int i = 0; i < 200; ++i) {
          const double w = lo * std::pow(hi / lo, i / 199.0);
          const auto g = freq_response(*m_r, w)(0, 0);
          ref_mag.x.push_back(w);
          ref_mag.y.push_back(std::abs(g));
          ref_phase.x.push_back(w);
          ref_phase.y.push_back(std::arg(g));
        }
        bode_mag.insert(bode_mag.begin(), std::move(ref_mag));
        bode_phase.insert(bode_phase.begin(), std::move(ref_phase));
      }
      write_svg_plot((sdir / ("bode_magnitude_" + scenario + ".svg")).string(), "Closed-loop gain: " + scenario,
                     "omega [rad/s]", "gain", bode_mag, true);
      write_svg_plot((sdir / ("bode_phase_" + scenario + ".svg")).string(), "Closed-loop phase: " + scenario,
                     "omega [rad/s]", "phase [rad]", bode_phase, true);
    }
  }
}

}  // namespace pivc
