#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gann/data.hpp"

namespace gann {

/// One array out of an .npz archive, widened to either doubles or int64s.
struct NpyArray {
  std::vector<std::int64_t> shape;
  bool is_float = false;
  std::vector<double> f;
  std::vector<std::int64_t> i;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (const auto s : shape) n *= s;
    return n;
  }
};

/// Reads a .npz (zip of .npy files; stored or deflate entries). Keys are the
/// member names without the .npy suffix.
std::map<std::string, NpyArray> read_npz(const std::filesystem::path& path);

/// Builds a bundle from SciPy-CSR style keys (adj_data/adj_indices/
/// adj_indptr/adj_shape, attr_* or attr_matrix, labels). The adjacency is
/// binarized, symmetrized, and stripped of self loops; when
/// largest_component is set the graph is restricted to its largest connected
/// component (original node order preserved).
DatasetBundle<double> bundle_from_npz(const std::map<std::string, NpyArray>& arrays,
                                      const std::string& name, bool largest_component);

/// read_npz + bundle_from_npz + save_dataset into out_dir.
void convert_npz_dataset(const std::filesystem::path& npz_path,
                         const std::filesystem::path& out_dir, const std::string& name,
                         bool largest_component);

}  // namespace gann
