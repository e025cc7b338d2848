#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tubeflow/flow.hpp"
#include "tubeflow/penalty.hpp"
#include "tubeflow/tube.hpp"

namespace tubeflow::io {

inline constexpr int kSchemaVersion = 1;

// Manifold spec JSON:
//   {"family": "circle"|"ellipse"|"sphere"|"torus"|"graph"|"sampled",
//    "params": {...}, "grid": [n1, ...], "ambient_dim": N}
// An explicit grid override replaces the file's grid.
ChartedManifold load_manifold_spec(const std::filesystem::path& file,
                                   const std::vector<int>& grid_override = {});

// Point cloud CSV: header row, N coordinate columns, optional trailing
// "weight" column.
DataCloud load_cloud_csv(const std::filesystem::path& file, int ambient_dim);

// Formats a double with 17 significant digits (report determinism).
std::string format_double(double v);

// Writes content to path atomically (temp file + rename).
void atomic_write(const std::filesystem::path& path,
                  const std::string& content);

std::string per_point_csv(const TubeConstants& tc);
std::string analyze_report_json(const TubeConstants& tc,
                                const std::vector<int>& grid);
std::string gradient_field_csv(const ChartedManifold& m,
                               const GradientField& field);
std::string frame_field_csv(const ChartedManifold& m,
                            const FrameField& frames);
std::string snapshot_csv(const GridShape& shape, const GridSamples& gs);
GridSamples load_snapshot_csv(const std::filesystem::path& file,
                              const GridShape& shape);

}  // namespace tubeflow::io
