#include "gann/npz.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <fstream>

#include <zlib.h>

namespace gann {
namespace {

std::uint16_t rd16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t rd32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<unsigned char> inflate_raw(const unsigned char* src, std::size_t src_len,
                                       std::size_t dst_len) {
  std::vector<unsigned char> out(dst_len);
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK)
    throw data_error("npz: zlib initialization failed");
  zs.next_in = const_cast<unsigned char*>(src);
  zs.avail_in = static_cast<uInt>(src_len);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(dst_len);
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != dst_len)
    throw data_error("npz: corrupt deflate stream");
  return out;
}

NpyArray parse_npy(const std::vector<unsigned char>& buf, const std::string& member) {
  const auto fail = [&](const std::string& what) {
    throw data_error("npz member '" + member + "': " + what);
  };
  if (buf.size() < 10 || std::memcmp(buf.data(), "\x93NUMPY", 6) != 0) fail("not an .npy file");
  const int major = buf[6];
  std::size_t header_len = 0, header_off = 0;
  if (major == 1) {
    header_len = rd16(buf.data() + 8);
    header_off = 10;
  } else if (major == 2 || major == 3) {
    if (buf.size() < 12) fail("truncated header");
    header_len = rd32(buf.data() + 8);
    header_off = 12;
  } else {
    fail("unsupported .npy version");
  }
  if (buf.size() < header_off + header_len) fail("truncated header");
  const std::string header(reinterpret_cast<const char*>(buf.data()) + header_off, header_len);

  const auto field = [&](const std::string& key) -> std::string {
    const auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos) fail("header missing '" + key + "'");
    auto colon = header.find(':', pos);
    return header.substr(colon + 1);
  };

  if (field("fortran_order").find("True") != std::string::npos)
    fail("fortran_order arrays are not supported");

  std::string descr = field("descr");
  const auto q0 = descr.find('\'');
  const auto q1 = descr.find('\'', q0 + 1);
  descr = descr.substr(q0 + 1, q1 - q0 - 1);
  if (!descr.empty() && descr[0] == '>') fail("big-endian arrays are not supported");

  NpyArray arr;
  std::string shape = field("shape");
  const auto p0 = shape.find('(');
  const auto p1 = shape.find(')', p0);
  std::string dims = shape.substr(p0 + 1, p1 - p0 - 1);
  for (std::size_t i = 0; i < dims.size();) {
    while (i < dims.size() && !std::isdigit(static_cast<unsigned char>(dims[i]))) ++i;
    if (i >= dims.size()) break;
    arr.shape.push_back(std::strtoll(dims.c_str() + i, nullptr, 10));
    while (i < dims.size() && std::isdigit(static_cast<unsigned char>(dims[i]))) ++i;
  }
  if (arr.shape.empty()) arr.shape.push_back(1);  // 0-d scalar

  const unsigned char* data = buf.data() + header_off + header_len;
  const std::size_t avail = buf.size() - header_off - header_len;
  const std::int64_t count = arr.size();

  const auto need = [&](std::size_t itemsize) {
    if (avail < static_cast<std::size_t>(count) * itemsize) fail("truncated data");
  };
  const auto load_float = [&](auto sample) {
    using T = decltype(sample);
    need(sizeof(T));
    arr.is_float = true;
    arr.f.resize(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
      T v;
      std::memcpy(&v, data + static_cast<std::size_t>(k) * sizeof(T), sizeof(T));
      arr.f[static_cast<std::size_t>(k)] = static_cast<double>(v);
    }
  };
  const auto load_int = [&](auto sample) {
    using T = decltype(sample);
    need(sizeof(T));
    arr.i.resize(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
      T v;
      std::memcpy(&v, data + static_cast<std::size_t>(k) * sizeof(T), sizeof(T));
      arr.i[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(v);
    }
  };

  const std::string code = descr.substr(1);
  if (code == "f8") load_float(double{});
  else if (code == "f4") load_float(float{});
  else if (code == "i8") load_int(std::int64_t{});
  else if (code == "i4") load_int(std::int32_t{});
  else if (code == "i2") load_int(std::int16_t{});
  else if (code == "i1" || code == "b1") load_int(std::int8_t{});
  else if (code == "u8") load_int(std::uint64_t{});
  else if (code == "u4") load_int(std::uint32_t{});
  else if (code == "u2") load_int(std::uint16_t{});
  else if (code == "u1") load_int(std::uint8_t{});
  else fail("unsupported dtype '" + descr + "'");
  return arr;
}

std::vector<std::int64_t> as_ints(const NpyArray& a) {
  if (!a.is_float) return a.i;
  std::vector<std::int64_t> out(a.f.size());
  for (std::size_t k = 0; k < a.f.size(); ++k) out[k] = static_cast<std::int64_t>(a.f[k]);
  return out;
}

const NpyArray& pick(const std::map<std::string, NpyArray>& arrays, const std::string& key) {
  const auto it = arrays.find(key);
  if (it == arrays.end()) throw data_error("npz: missing array '" + key + "'");
  return it->second;
}

}  // namespace

std::map<std::string, NpyArray> read_npz(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing file: " + path.string());
  std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (file.size() < 22) throw data_error("npz: file too small: " + path.string());

  // End-of-central-directory record, scanned backwards over the comment.
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = file.size() >= 22 + 65535 ? file.size() - 22 - 65535 : 0;
  for (std::size_t p = file.size() - 22; ; --p) {
    if (rd32(file.data() + p) == 0x06054b50u) {
      eocd = p;
      break;
    }
    if (p == lowest) break;
  }
  if (eocd == std::string::npos)
    throw data_error("npz: no zip end-of-central-directory in " + path.string());

  const std::uint16_t entry_count = rd16(file.data() + eocd + 10);
  std::size_t cd = rd32(file.data() + eocd + 16);

  std::map<std::string, NpyArray> arrays;
  for (std::uint16_t e = 0; e < entry_count; ++e) {
    if (cd + 46 > file.size() || rd32(file.data() + cd) != 0x02014b50u)
      throw data_error("npz: corrupt central directory in " + path.string());
    const std::uint16_t method = rd16(file.data() + cd + 10);
    const std::uint32_t comp_size = rd32(file.data() + cd + 20);
    const std::uint32_t raw_size = rd32(file.data() + cd + 24);
    const std::uint16_t name_len = rd16(file.data() + cd + 28);
    const std::uint16_t extra_len = rd16(file.data() + cd + 30);
    const std::uint16_t comment_len = rd16(file.data() + cd + 32);
    const std::uint32_t local_off = rd32(file.data() + cd + 42);
    std::string name(reinterpret_cast<const char*>(file.data()) + cd + 46, name_len);
    cd += 46u + name_len + extra_len + comment_len;

    if (local_off + 30 > file.size() || rd32(file.data() + local_off) != 0x04034b50u)
      throw data_error("npz: corrupt local header for '" + name + "'");
    const std::uint16_t lname = rd16(file.data() + local_off + 26);
    const std::uint16_t lextra = rd16(file.data() + local_off + 28);
    const std::size_t data_off = local_off + 30u + lname + lextra;
    if (data_off + comp_size > file.size())
      throw data_error("npz: truncated member '" + name + "'");

    std::vector<unsigned char> raw;
    if (method == 0) {
      raw.assign(file.begin() + static_cast<std::ptrdiff_t>(data_off),
                 file.begin() + static_cast<std::ptrdiff_t>(data_off + comp_size));
    } else if (method == 8) {
      raw = inflate_raw(file.data() + data_off, comp_size, raw_size);
    } else {
      throw data_error("npz: unsupported compression method for '" + name + "'");
    }

    if (name.size() >= 4 && name.compare(name.size() - 4, 4, ".npy") == 0)
      name.resize(name.size() - 4);
    NpyArray arr = parse_npy(raw, name);
    arrays.emplace(std::move(name), std::move(arr));
  }
  return arrays;
}

DatasetBundle<double> bundle_from_npz(const std::map<std::string, NpyArray>& arrays,
                                      const std::string& name, bool largest_component) {
  const auto adj_shape = as_ints(pick(arrays, "adj_shape"));
  if (adj_shape.size() != 2 || adj_shape[0] != adj_shape[1])
    throw data_error("npz: adjacency shape is not square");
  const Index n = static_cast<Index>(adj_shape[0]);
  const auto indptr = as_ints(pick(arrays, "adj_indptr"));
  const auto indices = as_ints(pick(arrays, "adj_indices"));
  if (static_cast<Index>(indptr.size()) != n + 1)
    throw data_error("npz: adj_indptr length mismatch");

  // Binarized symmetric adjacency without self loops.
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(indices.size() * 2);
  for (Index r = 0; r < n; ++r)
    for (std::int64_t k = indptr[static_cast<std::size_t>(r)];
         k < indptr[static_cast<std::size_t>(r) + 1]; ++k) {
      const Index c = static_cast<Index>(indices[static_cast<std::size_t>(k)]);
      if (c < 0 || c >= n) throw data_error("npz: adjacency column out of range");
      if (c == r) continue;
      trips.emplace_back(r, c, 1.0);
      trips.emplace_back(c, r, 1.0);
    }
  SparseMat<double> adj(n, n);
  adj.setFromTriplets(trips.begin(), trips.end(),
                      [](const double&, const double&) { return 1.0; });

  std::vector<Index> keep(static_cast<std::size_t>(n));
  std::iota(keep.begin(), keep.end(), Index{0});
  if (largest_component) {
    std::vector<Index> comp(static_cast<std::size_t>(n), -1);
    Index n_comp = 0;
    for (Index s = 0; s < n; ++s) {
      if (comp[static_cast<std::size_t>(s)] >= 0) continue;
      std::deque<Index> frontier{s};
      comp[static_cast<std::size_t>(s)] = n_comp;
      while (!frontier.empty()) {
        const Index u = frontier.front();
        frontier.pop_front();
        for (SparseMat<double>::InnerIterator it(adj, u); it; ++it)
          if (comp[static_cast<std::size_t>(it.col())] < 0) {
            comp[static_cast<std::size_t>(it.col())] = n_comp;
            frontier.push_back(static_cast<Index>(it.col()));
          }
      }
      ++n_comp;
    }
    std::vector<Index> sizes(static_cast<std::size_t>(n_comp), 0);
    for (const Index c : comp) ++sizes[static_cast<std::size_t>(c)];
    const Index biggest = static_cast<Index>(
        std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    keep.clear();
    for (Index i = 0; i < n; ++i)
      if (comp[static_cast<std::size_t>(i)] == biggest) keep.push_back(i);
  }

  std::vector<Index> remap(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) remap[static_cast<std::size_t>(keep[k])] =
      static_cast<Index>(k);
  const Index nk = static_cast<Index>(keep.size());

  std::vector<std::pair<Index, Index>> edges;
  for (Index u = 0; u < n; ++u) {
    if (remap[static_cast<std::size_t>(u)] < 0) continue;
    for (SparseMat<double>::InnerIterator it(adj, u); it; ++it) {
      const Index v = static_cast<Index>(it.col());
      if (u < v && remap[static_cast<std::size_t>(v)] >= 0)
        edges.emplace_back(remap[static_cast<std::size_t>(u)],
                           remap[static_cast<std::size_t>(v)]);
    }
  }

  DatasetBundle<double> bundle;
  bundle.name = name;
  bundle.graph = graph_from_edges<double>(nk, edges);

  const auto attr_it = arrays.find("attr_data");
  if (attr_it != arrays.end()) {
    const auto a_shape = as_ints(pick(arrays, "attr_shape"));
    const auto a_indptr = as_ints(pick(arrays, "attr_indptr"));
    const auto a_indices = as_ints(pick(arrays, "attr_indices"));
    const NpyArray& a_data = attr_it->second;
    if (a_shape.size() != 2 || static_cast<Index>(a_shape[0]) != n)
      throw data_error("npz: attribute shape mismatch");
    const Index d = static_cast<Index>(a_shape[1]);
    std::vector<Eigen::Triplet<double>> ft;
    for (Index r = 0; r < n; ++r) {
      const Index rr = remap[static_cast<std::size_t>(r)];
      if (rr < 0) continue;
      for (std::int64_t k = a_indptr[static_cast<std::size_t>(r)];
           k < a_indptr[static_cast<std::size_t>(r) + 1]; ++k) {
        const double v = a_data.is_float ? a_data.f[static_cast<std::size_t>(k)]
                                         : static_cast<double>(a_data.i[static_cast<std::size_t>(k)]);
        ft.emplace_back(rr, static_cast<Index>(a_indices[static_cast<std::size_t>(k)]), v);
      }
    }
    SparseMat<double> feats(nk, d);
    feats.setFromTriplets(ft.begin(), ft.end());
    bundle.features = FeatureMatrix<double>(std::move(feats));
  } else if (arrays.count("attr_matrix")) {
    const NpyArray& a = pick(arrays, "attr_matrix");
    if (a.shape.size() != 2 || static_cast<Index>(a.shape[0]) != n)
      throw data_error("npz: attribute shape mismatch");
    const Index d = static_cast<Index>(a.shape[1]);
    Matrix<double> feats(nk, d);
    for (Index r = 0; r < n; ++r) {
      const Index rr = remap[static_cast<std::size_t>(r)];
      if (rr < 0) continue;
      for (Index c = 0; c < d; ++c) {
        const std::size_t k = static_cast<std::size_t>(r) * static_cast<std::size_t>(d) +
                              static_cast<std::size_t>(c);
        feats(rr, c) = a.is_float ? a.f[k] : static_cast<double>(a.i[k]);
      }
    }
    bundle.features = FeatureMatrix<double>(std::move(feats));
  } else {
    throw data_error("npz: missing array 'attr_data' (or 'attr_matrix')");
  }

  const auto labels = as_ints(pick(arrays, "labels"));
  if (static_cast<Index>(labels.size()) != n) throw data_error("npz: labels length mismatch");
  std::int64_t c_max = -1;
  bundle.labels.assign(static_cast<std::size_t>(nk), -1);
  for (Index r = 0; r < n; ++r) {
    const Index rr = remap[static_cast<std::size_t>(r)];
    if (rr < 0) continue;
    const std::int64_t y = labels[static_cast<std::size_t>(r)];
    bundle.labels[static_cast<std::size_t>(rr)] = static_cast<std::int32_t>(y);
    c_max = std::max(c_max, y);
  }
  bundle.num_classes = static_cast<Index>(c_max + 1);
  detail::validate_bundle(bundle);
  return bundle;
}

void convert_npz_dataset(const std::filesystem::path& npz_path,
                         const std::filesystem::path& out_dir, const std::string& name,
                         bool largest_component) {
  const auto arrays = read_npz(npz_path);
  const DatasetBundle<double> bundle = bundle_from_npz(arrays, name, largest_component);
  save_dataset(bundle, out_dir.string());
}

}  // namespace gann
