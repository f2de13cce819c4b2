#include "orthodistill/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "orthodistill/experiment.hpp"
#include "orthodistill/util.hpp"

namespace orthodistill {

namespace {

std::string num(double v, const char* fmt = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

std::string coord(double v) { return num(v, "%.2f"); }

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(cat("cannot open ", path, " for writing"));
    out << content;
    if (!out) throw std::runtime_error(cat("write failed for ", path));
}

// Gaussian kernel density estimate on a fixed 200-point grid.
struct Kde {
    std::vector<double> x, y;
};

Kde kde(const std::vector<double>& values) {
    Kde out;
    if (values.empty()) return out;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    double sigma = std::sqrt(var);
    double h = 1.06 * sigma * std::pow(static_cast<double>(values.size()), -0.2);
    if (h < 1e-2) h = 1e-2;  // degenerate samples still render as a spike
    double lo = *std::min_element(values.begin(), values.end()) - 3.0 * h;
    double hi = *std::max_element(values.begin(), values.end()) + 3.0 * h;
    std::size_t grid = 200;
    out.x.resize(grid);
    out.y.resize(grid);
    double inv = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * M_PI));
    for (std::size_t g = 0; g < grid; ++g) {
        double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid - 1);
        double acc = 0.0;
        for (double v : values) {
            double z = (x - v) / h;
            acc += std::exp(-0.5 * z * z);
        }
        out.x[g] = x;
        out.y[g] = acc * inv;
    }
    return out;
}

struct Svg {
    std::ostringstream body;
    double width, height;

    Svg(double w, double h) : width(w), height(h) {
        body << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
             << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
        body << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width_ = 1.0, bool dashed = false) {
        body << "<line x1=\"" << coord(x1) << "\" y1=\"" << coord(y1) << "\" x2=\"" << coord(x2)
             << "\" y2=\"" << coord(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
             << width_ << "\"" << (dashed ? " stroke-dasharray=\"4,3\"" : "") << "/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double width_ = 1.5, bool dashed = false) {
        if (pts.empty()) return;
        body << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width_
             << "\"" << (dashed ? " stroke-dasharray=\"4,3\"" : "") << " points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i)
            body << (i ? " " : "") << coord(pts[i].first) << "," << coord(pts[i].second);
        body << "\"/>\n";
    }

    void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
        body << "<polygon fill=\"" << stroke << "\" fill-opacity=\"0.15\" stroke=\"" << stroke
             << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i)
            body << (i ? " " : "") << coord(pts[i].first) << "," << coord(pts[i].second);
        body << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, int size = 11,
              const std::string& fill = "#333", const char* anchor = "start") {
        body << "<text x=\"" << coord(x) << "\" y=\"" << coord(y) << "\" font-family=\"sans-serif\""
             << " font-size=\"" << size << "\" fill=\"" << fill << "\" text-anchor=\"" << anchor
             << "\">" << s << "</text>\n";
    }

    std::string finish() {
        body << "</svg>\n";
        return body.str();
    }
};

// maps data points into a plot rectangle
struct Frame {
    double x0, y0, x1, y1;      // pixel corners (y grows downward)
    double dx0, dx1, dy0, dy1;  // data ranges

    double px(double x) const { return x0 + (x - dx0) / (dx1 - dx0) * (x1 - x0); }
    double py(double y) const { return y1 - (y - dy0) / (dy1 - dy0) * (y1 - y0); }
};

std::string report_label(const EvalReport& r) { return r.variant; }

// ---- gram_density ----------------------------------------------------------------

PlotPaths emit_gram_density(const std::vector<EvalReport>& reports,
                            const std::string& out_prefix) {
    std::ostringstream csv;
    csv << "report,head,side,kind,value\n";
    for (const EvalReport& r : reports)
        for (const EvalReport::GramEntry& g : r.orthogonality) {
            for (double v : g.diag)
                csv << report_label(r) << "," << g.head << "," << g.side << ",diag," << num(v)
                    << "\n";
            for (double v : g.offdiag)
                csv << report_label(r) << "," << g.head << "," << g.side << ",offdiag," << num(v)
                    << "\n";
        }

    // two panels over the first head's wtw-side entries: scaled off-diagonal
    // (left, dashed reference at 0) and scaled diagonal (right, dashed at 1)
    Svg svg(760, 420);
    auto panel = [&](double x0, bool diag_panel, const std::string& title) {
        Frame f{x0, 60, x0 + 320, 360, 0, 1, 0, 1};
        double dlo = 1e300, dhi = -1e300, ymax = 0.0;
        std::vector<Kde> curves;
        for (const EvalReport& r : reports) {
            const EvalReport::GramEntry* entry = nullptr;
            for (const EvalReport::GramEntry& g : r.orthogonality)
                if (g.side == "wtw") {
                    entry = &g;
                    break;
                }
            if (!entry) continue;
            Kde k = kde(diag_panel ? entry->diag : entry->offdiag);
            if (k.x.empty()) continue;
            dlo = std::min(dlo, k.x.front());
            dhi = std::max(dhi, k.x.back());
            for (double y : k.y) ymax = std::max(ymax, y);
            curves.push_back(std::move(k));
        }
        if (curves.empty()) {
            dlo = 0.0;
            dhi = 1.0;
            ymax = 1.0;
        }
        double ref = diag_panel ? 1.0 : 0.0;
        dlo = std::min(dlo, ref - 0.1);
        dhi = std::max(dhi, ref + 0.1);
        f.dx0 = dlo;
        f.dx1 = dhi;
        f.dy0 = 0.0;
        f.dy1 = ymax * 1.05 + 1e-12;

        svg.line(f.x0, f.y1, f.x1, f.y1, "#333");
        svg.line(f.x0, f.y0, f.x0, f.y1, "#333");
        svg.text((f.x0 + f.x1) / 2, 40, title, 13, "#111", "middle");
        svg.line(f.px(ref), f.y0, f.px(ref), f.y1, "#888", 1.0, true);
        svg.text(f.px(ref), f.y1 + 16, num(ref, "%.0f"), 10, "#555", "middle");
        for (std::size_t i = 0; i < curves.size(); ++i) {
            std::vector<std::pair<double, double>> pts;
            for (std::size_t g = 0; g < curves[i].x.size(); ++g)
                pts.emplace_back(f.px(curves[i].x[g]), f.py(curves[i].y[g]));
            svg.polyline(pts, kPalette[i % 6]);
        }
    };
    panel(50, false, "Scaled non-diagonal elements");
    panel(410, true, "Scaled diagonal elements");
    for (std::size_t i = 0; i < reports.size(); ++i)
        svg.text(50.0 + 170.0 * static_cast<double>(i), 395, report_label(reports[i]), 11,
                 kPalette[i % 6]);

    PlotPaths paths{out_prefix + ".csv", out_prefix + ".svg"};
    write_file(paths.csv, csv.str());
    write_file(paths.svg, svg.finish());
    return paths;
}

// ---- radar ------------------------------------------------------------------------

PlotPaths emit_radar(const std::vector<EvalReport>& reports, const std::string& out_prefix) {
    // axis normalizations (documented in the README): knn accuracy and auroc
    // as-is, 1 - fpr95, and 1/(1 + gram score) of the first orthogonality entry
    const char* axes[] = {"knn_acc", "auroc", "one_minus_fpr95", "inv_one_plus_gram"};
    std::ostringstream csv;
    csv << "report,axis,value\n";
    std::vector<std::vector<double>> values;
    for (const EvalReport& r : reports) {
        std::vector<double> v(4, 0.0);
        v[0] = r.knn_accuracy;
        v[1] = r.ood ? r.ood->auroc : 0.0;
        v[2] = r.ood ? 1.0 - r.ood->fpr95 : 0.0;
        v[3] = r.orthogonality.empty() ? 0.0 : 1.0 / (1.0 + r.orthogonality.front().score);
        for (int a = 0; a < 4; ++a)
            csv << report_label(r) << "," << axes[a] << "," << num(v[a]) << "\n";
        values.push_back(std::move(v));
    }

    Svg svg(520, 520);
    double cx = 260, cy = 260, radius = 180;
    auto point = [&](int axis, double v) {
        double angle = M_PI / 2.0 - axis * M_PI / 2.0;  // up, right, down, left
        return std::pair<double, double>(cx + v * radius * std::cos(angle),
                                         cy - v * radius * std::sin(angle));
    };
    for (double ring : {0.25, 0.5, 0.75, 1.0}) {
        std::vector<std::pair<double, double>> pts;
        for (int a = 0; a <= 4; ++a) pts.push_back(point(a % 4, ring));
        svg.polyline(pts, "#ccc", 0.8);
    }
    for (int a = 0; a < 4; ++a) {
        auto [x, y] = point(a, 1.08);
        svg.line(cx, cy, point(a, 1.0).first, point(a, 1.0).second, "#999", 0.8);
        svg.text(x, y, axes[a], 11, "#333", "middle");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::vector<std::pair<double, double>> pts;
        for (int a = 0; a < 4; ++a) pts.push_back(point(a, std::clamp(values[i][a], 0.0, 1.0)));
        svg.polygon(pts, kPalette[i % 6]);
        svg.text(20, 20 + 16 * static_cast<double>(i), report_label(reports[i]), 11,
                 kPalette[i % 6]);
    }

    PlotPaths paths{out_prefix + ".csv", out_prefix + ".svg"};
    write_file(paths.csv, csv.str());
    write_file(paths.svg, svg.finish());
    return paths;
}

// ---- loss_curves -------------------------------------------------------------------

PlotPaths emit_loss_curves(const std::vector<std::string>& paths_in,
                           const std::string& out_prefix) {
    std::ostringstream csv;
    csv << "report,epoch,dim_red_loss,student_loss,total_loss\n";
    std::vector<TrainHistory> histories;
    for (const std::string& p : paths_in) {
        TrainHistory h = load_history(p);
        for (const EpochRecord& rec : h.epochs)
            csv << p << "," << rec.epoch << "," << num(rec.dim_red_loss) << ","
                << num(rec.student_loss) << "," << num(rec.total_loss) << "\n";
        histories.push_back(std::move(h));
    }

    Svg svg(720, 440);
    Frame f{60, 40, 680, 380, 0, 1, 0, 1};
    double xmax = 1.0, ymax = 0.0;
    for (const TrainHistory& h : histories)
        for (const EpochRecord& rec : h.epochs) {
            xmax = std::max(xmax, static_cast<double>(rec.epoch));
            ymax = std::max(ymax, rec.total_loss);
        }
    f.dx1 = xmax;
    f.dy1 = ymax > 0.0 ? ymax * 1.05 : 1.0;
    svg.line(f.x0, f.y1, f.x1, f.y1, "#333");
    svg.line(f.x0, f.y0, f.x0, f.y1, "#333");
    svg.text((f.x0 + f.x1) / 2, 410, "epoch", 12, "#111", "middle");
    svg.text(18, (f.y0 + f.y1) / 2, "loss", 12, "#111", "middle");
    for (std::size_t i = 0; i < histories.size(); ++i) {
        std::vector<std::pair<double, double>> total, dimred, student;
        for (const EpochRecord& rec : histories[i].epochs) {
            double x = f.px(static_cast<double>(rec.epoch));
            total.emplace_back(x, f.py(rec.total_loss));
            dimred.emplace_back(x, f.py(rec.dim_red_loss));
            student.emplace_back(x, f.py(rec.student_loss));
        }
        svg.polyline(total, kPalette[i % 6], 1.8);
        svg.polyline(dimred, kPalette[i % 6], 1.0, true);
        svg.polyline(student, kPalette[i % 6], 0.8, true);
        svg.text(f.x0 + 8, f.y0 + 14 + 14 * static_cast<double>(i), paths_in[i], 10,
                 kPalette[i % 6]);
    }

    PlotPaths out{out_prefix + ".csv", out_prefix + ".svg"};
    write_file(out.csv, csv.str());
    write_file(out.svg, svg.finish());
    return out;
}

}  // namespace

PlotKind plot_kind_from_name(const std::string& name) {
    if (name == "gram_density") return PlotKind::gram_density;
    if (name == "radar") return PlotKind::radar;
    if (name == "loss_curves") return PlotKind::loss_curves;
    throw std::invalid_argument(
        cat("unknown plot kind '", name, "' (expected gram_density, radar or loss_curves)"));
}

PlotPaths emit_plot_data(const std::vector<std::string>& input_paths, PlotKind kind,
                         const std::string& out_prefix) {
    if (input_paths.empty()) throw std::invalid_argument("plot: no input files given");
    if (kind == PlotKind::loss_curves) return emit_loss_curves(input_paths, out_prefix);
    std::vector<EvalReport> reports;
    for (const std::string& p : input_paths) reports.push_back(load_report(p));
    return kind == PlotKind::gram_density ? emit_gram_density(reports, out_prefix)
                                          : emit_radar(reports, out_prefix);
}

}  // namespace orthodistill
