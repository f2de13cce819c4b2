#pragma once

#include <string>
#include <vector>

namespace orthodistill {

enum class PlotKind { gram_density, radar, loss_curves };

PlotKind plot_kind_from_name(const std::string& name);  // throws on unknown kind

struct PlotPaths {
    std::string csv;
    std::string svg;
};

// Reads eval reports (gram_density, radar) or training histories
// (loss_curves) and writes <out_prefix>.csv with the raw values plus a
// self-contained static <out_prefix>.svg. Emission is a pure function of the
// inputs: re-running it reproduces both files byte for byte.
PlotPaths emit_plot_data(const std::vector<std::string>& input_paths, PlotKind kind,
                         const std::string& out_prefix);

}  // namespace orthodistill
