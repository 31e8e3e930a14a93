#pragma once

#include <string>
#include <vector>

namespace reswm {

// Reads <run_dir>/metrics.csv (required) plus config.resolved and final.ckpt
// when present, and writes report.json and curves.svg into the run directory.
// Output bytes are a deterministic function of the inputs.
void emit_report(const std::string& run_dir);

// Binary portable graymap (P5, maxval 255); values are clamped to [0,1].
void write_pgm(const std::string& path, int height, int width,
               const std::vector<double>& values);

}  // namespace reswm
