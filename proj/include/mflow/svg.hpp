#pragma once

#include <string>
#include <vector>

namespace mflow {

/// Minimal SVG line/scatter plots: fixed 800x600 viewport, linear or log10
/// axes, ticks and a legend. Informational output only; the numbers always
/// live in the CSVs next to the plot.
class SvgPlot {
  public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel,
            bool logx = false, bool logy = false);

    void add_line(const std::string& name, const std::vector<double>& xs,
                  const std::vector<double>& ys);
    void add_scatter(const std::string& name, const std::vector<double>& xs,
                     const std::vector<double>& ys);

    std::string render() const;

  private:
    struct Series {
        std::string name;
        std::vector<double> xs, ys;
        bool scatter = false;
    };
    std::string title_, xlabel_, ylabel_;
    bool logx_, logy_;
    std::vector<Series> series_;
};

}  // namespace mflow
