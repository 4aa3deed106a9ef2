#include "gsplice/scene_io.hpp"
#include "gsplice/error.hpp"
#include "gsplice/intrinsics.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gsplice {

using nlohmann::json;

std::string frame_name(int index, const char* ext) {
  char buf[32];
  if (*ext)
    std::snprintf(buf, sizeof(buf), "%05d.%s", index, ext);
  else
    std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string(), e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, path.string(), "cannot open for writing");
  os << text;
  if (!os) throw Error(ErrorKind::IoError, path.string(), "write failed");
}

namespace {

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::IoError, path.parent_path().string(), ec.message());
  }
}

float to_little(float v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = __builtin_bswap32(u);
    std::memcpy(&v, &u, 4);
  }
  return v;
}

std::string pfm_bytes(Index rows, Index cols, int channels, const std::function<float(Index, Index, int)>& at) {
  std::ostringstream os(std::ios::binary);
  os << (channels == 3 ? "PF" : "Pf") << "\n" << cols << " " << rows << "\n-1.0\n";
  std::vector<float> line(static_cast<std::size_t>(cols * channels));
  for (Index r = rows - 1; r >= 0; --r) {
    for (Index c = 0; c < cols; ++c)
      for (int k = 0; k < channels; ++k)
        line[static_cast<std::size_t>(c * channels + k)] = to_little(at(r, c, k));
    os.write(reinterpret_cast<const char*>(line.data()), static_cast<std::streamsize>(line.size() * sizeof(float)));
  }
  return std::move(os).str();
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, path.string(), "cannot open for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::IoError, path.string(), "write failed");
}

}  // namespace

std::string encode_pfm(const Planed& plane) {
  return pfm_bytes(plane.rows(), plane.cols(), 1, [&](Index r, Index c, int) { return static_cast<float>(plane(r, c)); });
}

std::string encode_pfm(const Image3d& image) {
  return pfm_bytes(image.rows(), image.cols(), 3,
                   [&](Index r, Index c, int k) { return static_cast<float>(image[k](r, c)); });
}

void write_pfm(const fs::path& path, const Planed& plane) { write_bytes(path, encode_pfm(plane)); }
void write_pfm(const fs::path& path, const Image3d& image) { write_bytes(path, encode_pfm(image)); }

Image3d read_pfm(const fs::path& path, int* channels_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  std::string magic;
  long cols = 0, rows = 0;
  double scale = 0;
  is >> magic >> cols >> rows >> scale;
  if (!is || (magic != "PF" && magic != "Pf") || cols <= 0 || rows <= 0 || scale == 0)
    throw Error(ErrorKind::ParseError, path.string(), "bad PFM header");
  is.get();  // single whitespace before the raster
  const int channels = magic == "PF" ? 3 : 1;
  const bool little = scale < 0;
  std::vector<float> data(static_cast<std::size_t>(rows * cols * channels));
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(data.size() * sizeof(float)))
    throw Error(ErrorKind::ParseError, path.string(), "truncated PFM raster");
  const bool swap = little != (std::endian::native == std::endian::little);
  if (swap) {
    for (float& f : data) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
  Image3d img(rows, cols, 0.0);
  for (long r = 0; r < rows; ++r) {
    const long src_row = rows - 1 - r;
    for (long c = 0; c < cols; ++c)
      for (int k = 0; k < 3; ++k)
        img[k](r, c) = data[static_cast<std::size_t>((src_row * cols + c) * channels + (channels == 3 ? k : 0))];
  }
  if (channels_out) *channels_out = channels;
  return img;
}

Planed read_pfm_plane(const fs::path& path) { return read_pfm(path)[0]; }

namespace {

std::vector<unsigned char> to_rgb8(const Image3d& image) {
  const Index rows = image.rows(), cols = image.cols();
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows * cols * 3));
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      for (int k = 0; k < 3; ++k) {
        const double v = std::clamp(image[k](r, c), 0.0, 1.0);
        buf[static_cast<std::size_t>((r * cols + c) * 3 + k)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  return buf;
}

png_image make_png_header(Index rows, Index cols) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(cols);
  img.height = static_cast<png_uint_32>(rows);
  img.format = PNG_FORMAT_RGB;
  return img;
}

}  // namespace

Image3d quantize8(const Image3d& image) {
  return image.map([](const Planed& p) -> Planed { return (p.max(0.0).min(1.0) * 255.0).round() / 255.0; });
}

std::vector<unsigned char> encode_png(const Image3d& image) {
  const std::vector<unsigned char> rgb = to_rgb8(image);
  png_image img = make_png_header(image.rows(), image.cols());
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr))
    throw Error(ErrorKind::IoError, "<memory>", img.message);
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr))
    throw Error(ErrorKind::IoError, "<memory>", img.message);
  out.resize(size);
  return out;
}

void write_png(const fs::path& path, const Image3d& image) {
  ensure_parent(path);
  const std::vector<unsigned char> bytes = encode_png(image);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, path.string(), "cannot open for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::IoError, path.string(), "write failed");
}

void write_png(const fs::path& path, const Planed& gray) { write_png(path, Image3d(gray)); }

Image3d read_png(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw Error(ErrorKind::ParseError, path.string(), img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorKind::ParseError, path.string(), img.message);
  }
  const Index rows = img.height, cols = img.width;
  Image3d out(rows, cols, 0.0);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      for (int k = 0; k < 3; ++k) out[k](r, c) = buf[static_cast<std::size_t>((r * cols + c) * 3 + k)] / 255.0;
  return out;
}

// --- PLY --------------------------------------------------------------------

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t offset = 0;
};

std::size_t ply_type_size(const std::string& t) {
  static const std::map<std::string, std::size_t> sizes = {
      {"char", 1},   {"uchar", 1},  {"int8", 1},    {"uint8", 1},  {"short", 2},   {"ushort", 2},
      {"int16", 2},  {"uint16", 2}, {"int", 4},     {"uint", 4},   {"int32", 4},   {"uint32", 4},
      {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8}};
  const auto it = sizes.find(t);
  return it == sizes.end() ? 0 : it->second;
}

double ply_binary_value(const unsigned char* p, const std::string& t) {
  auto rd = [p](auto tag) {
    decltype(tag) v;
    std::memcpy(&v, p, sizeof(v));
    return static_cast<double>(v);
  };
  if (t == "float" || t == "float32") return rd(float{});
  if (t == "double" || t == "float64") return rd(double{});
  if (t == "uchar" || t == "uint8") return rd(std::uint8_t{});
  if (t == "char" || t == "int8") return rd(std::int8_t{});
  if (t == "short" || t == "int16") return rd(std::int16_t{});
  if (t == "ushort" || t == "uint16") return rd(std::uint16_t{});
  if (t == "int" || t == "int32") return rd(std::int32_t{});
  return rd(std::uint32_t{});
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

SplatModel load_splats(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("ply", 0) != 0) throw Error(ErrorKind::ParseError, path.string(), "missing ply magic");
  std::string format;
  std::size_t count = 0;
  bool in_vertex = false, seen_vertex = false;
  std::vector<PlyProperty> props;
  std::size_t stride = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      ls >> format;
    } else if (tok == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      if (seen_vertex && name != "vertex") {
        in_vertex = false;
        continue;
      }
      if (name != "vertex") throw Error(ErrorKind::ParseError, path.string(), "element before vertex: " + name);
      in_vertex = seen_vertex = true;
      count = n;
    } else if (tok == "property" && in_vertex) {
      PlyProperty p;
      ls >> p.type;
      if (p.type == "list") throw Error(ErrorKind::ParseError, path.string(), "list properties unsupported");
      ls >> p.name;
      const std::size_t sz = ply_type_size(p.type);
      if (sz == 0) throw Error(ErrorKind::ParseError, path.string(), "unknown property type " + p.type);
      p.offset = stride;
      stride += sz;
      props.push_back(p);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!seen_vertex) throw Error(ErrorKind::ParseError, path.string(), "no vertex element");
  if (format != "binary_little_endian" && format != "ascii")
    throw Error(ErrorKind::ParseError, path.string(), "unsupported format " + format);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < props.size(); ++i) index[props[i].name] = i;
  std::vector<std::string> required = {"x", "y", "z", "opacity", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < 3; ++i) required.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) required.push_back("rot_" + std::to_string(i));
  for (const auto& name : required)
    if (!index.count(name)) throw Error(ErrorKind::MissingField, path.string(), name);
  int n_rest = 0;
  while (index.count("f_rest_" + std::to_string(n_rest))) ++n_rest;
  if (n_rest != 0 && n_rest != 9 && n_rest != 24 && n_rest != 45)
    throw Error(ErrorKind::MissingField, path.string(), "f_rest_" + std::to_string(n_rest));
  const int ac_per_channel = n_rest / 3;

  std::vector<double> values(props.size());
  SplatModel model;
  model.splats.resize(count);
  std::vector<unsigned char> record(stride);
  for (std::size_t i = 0; i < count; ++i) {
    if (format == "ascii") {
      for (auto& v : values)
        if (!(is >> v)) throw Error(ErrorKind::ParseError, path.string(), "truncated ascii vertex data");
    } else {
      is.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(stride));
      if (is.gcount() != static_cast<std::streamsize>(stride))
        throw Error(ErrorKind::ParseError, path.string(), "truncated binary vertex data");
      for (std::size_t k = 0; k < props.size(); ++k)
        values[k] = ply_binary_value(record.data() + props[k].offset, props[k].type);
    }
    auto v = [&](const std::string& name) { return values[index.at(name)]; };
    Splat& s = model.splats[i];
    s.position = {v("x"), v("y"), v("z")};
    s.scale = {std::exp(v("scale_0")), std::exp(v("scale_1")), std::exp(v("scale_2"))};
    Eigen::Quaterniond q(v("rot_0"), v("rot_1"), v("rot_2"), v("rot_3"));
    if (!(q.norm() > 0)) throw Error(ErrorKind::ParseError, path.string(), "zero quaternion at splat " + std::to_string(i));
    s.rotation = q.normalized();
    s.opacity = logistic(v("opacity"));
    s.sh.setZero();
    for (int ch = 0; ch < 3; ++ch) {
      s.sh(ch, 0) = v("f_dc_" + std::to_string(ch));
      // f_rest is channel-major: all AC terms of R, then G, then B.
      for (int j = 0; j < ac_per_channel; ++j) s.sh(ch, 1 + j) = v("f_rest_" + std::to_string(ch * ac_per_channel + j));
    }
  }
  return model;
}

void save_splats(const fs::path& path, const SplatModel& model) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, path.string(), "cannot open for writing");
  os << "ply\nformat binary_little_endian 1.0\nelement vertex " << model.size() << "\n";
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < 45; ++i) names.push_back("f_rest_" + std::to_string(i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  for (const auto& n : names) os << "property float " << n << "\n";
  os << "end_header\n";
  std::vector<float> rec;
  for (const Splat& s : model.splats) {
    rec.clear();
    for (int k = 0; k < 3; ++k) rec.push_back(static_cast<float>(s.position[k]));
    rec.insert(rec.end(), {0.f, 0.f, 0.f});
    for (int ch = 0; ch < 3; ++ch) rec.push_back(static_cast<float>(s.sh(ch, 0)));
    for (int ch = 0; ch < 3; ++ch)
      for (int j = 1; j < kShCoeffs; ++j) rec.push_back(static_cast<float>(s.sh(ch, j)));
    const double o = std::clamp(s.opacity, 1e-7, 1.0 - 1e-7);
    rec.push_back(static_cast<float>(std::log(o / (1.0 - o))));
    for (int k = 0; k < 3; ++k) rec.push_back(static_cast<float>(std::log(s.scale[k])));
    rec.insert(rec.end(), {static_cast<float>(s.rotation.w()), static_cast<float>(s.rotation.x()),
                           static_cast<float>(s.rotation.y()), static_cast<float>(s.rotation.z())});
    for (float& f : rec) f = to_little(f);
    os.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size() * sizeof(float)));
  }
  if (!os) throw Error(ErrorKind::IoError, path.string(), "write failed");
}

// --- JSON side files --------------------------------------------------------

Camera load_intrinsics(const fs::path& path) {
  const json j = read_json(path);
  Camera k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string(), e.what());
  }
  if (!k.valid()) throw Error(ErrorKind::ValueOutOfRange, path.string(), "intrinsics violate fx,fy > 0, 0 <= c < size");
  return k;
}

void save_intrinsics(const fs::path& path, const Camera& k) {
  const json j = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  write_text(path, j.dump(2) + "\n");
}

TrackSet load_tracks(const fs::path& path) {
  const json j = read_json(path);
  TrackSet t;
  try {
    for (const auto& frame : j.at("points")) {
      std::vector<Eigen::Vector2d> pts;
      for (const auto& p : frame) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      t.points.push_back(std::move(pts));
    }
    if (j.contains("visible")) {
      for (const auto& frame : j.at("visible")) t.visible.push_back(frame.get<std::vector<bool>>());
    } else {
      for (const auto& f : t.points) t.visible.emplace_back(f.size(), true);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string(), e.what());
  }
  if (t.visible.size() != t.points.size())
    throw Error(ErrorKind::DimensionMismatch, path.string(), "visible and points disagree on frame count");
  for (std::size_t f = 0; f < t.points.size(); ++f) {
    if (t.points[f].size() != t.tracks() || t.visible[f].size() != t.tracks())
      throw Error(ErrorKind::DimensionMismatch, path.string(), "frame " + std::to_string(f) + " has a different track count");
  }
  return t;
}

void save_tracks(const fs::path& path, const TrackSet& tracks) {
  json pts = json::array(), vis = json::array();
  for (std::size_t f = 0; f < tracks.frames(); ++f) {
    json fp = json::array();
    for (const auto& p : tracks.points[f]) fp.push_back({p.x(), p.y()});
    pts.push_back(fp);
    vis.push_back(tracks.visible[f]);
  }
  write_text(path, json{{"points", pts}, {"visible", vis}}.dump() + "\n");
}

// --- scene ------------------------------------------------------------------

namespace {

void check_dims(const fs::path& path, Index rows, Index cols, const Camera& k) {
  if (rows != k.height || cols != k.width)
    throw Error(ErrorKind::DimensionMismatch, path.string(),
                std::to_string(cols) + "x" + std::to_string(rows) + " vs intrinsics " + std::to_string(k.width) + "x" +
                    std::to_string(k.height));
}

bool any_exists(const fs::path& dir, const std::vector<std::string>& subdirs) {
  return std::any_of(subdirs.begin(), subdirs.end(), [&](const auto& s) { return fs::exists(dir / s); });
}

}  // namespace

Scene load_scene(const fs::path& dir) {
  Scene scene;
  scene.dir = dir;
  scene.camera = load_intrinsics(dir / "intrinsics.json");
  const Camera& k = scene.camera;

  const fs::path frames_dir = dir / "frames";
  if (!fs::exists(frames_dir / frame_name(0, "png")))
    throw Error(ErrorKind::MissingFile, (fs::path("frames") / frame_name(0, "png")).string());
  for (int t = 0; fs::exists(frames_dir / frame_name(t, "png")); ++t) {
    const fs::path p = frames_dir / frame_name(t, "png");
    Frame f{read_png(p), ColorSpace::sRGB, t};
    check_dims(p, f.pixels.rows(), f.pixels.cols(), k);
    scene.frames.push_back(std::move(f));
  }
  const int n = static_cast<int>(scene.frames.size());

  for (int t = 0; t < n; ++t) {
    const fs::path rel = fs::path("depth") / frame_name(t, "pfm");
    if (!fs::exists(dir / rel)) throw Error(ErrorKind::MissingFile, rel.string());
    int channels = 0;
    Image3d raw = read_pfm(dir / rel, &channels);
    if (channels != 1) throw Error(ErrorKind::ParseError, rel.string(), "depth must be single-channel");
    check_dims(rel, raw.rows(), raw.cols(), k);
    scene.depth.push_back(DepthMap::from_depth(std::move(raw[0])));
  }

  if (fs::exists(dir / "normals")) {
    std::vector<NormalMap> normals;
    for (int t = 0; t < n; ++t) {
      const fs::path rel = fs::path("normals") / frame_name(t, "pfm");
      if (!fs::exists(dir / rel)) throw Error(ErrorKind::MissingFile, rel.string());
      int channels = 0;
      Image3d nm = read_pfm(dir / rel, &channels);
      if (channels != 3) throw Error(ErrorKind::ParseError, rel.string(), "normals must be 3-channel");
      check_dims(rel, nm.rows(), nm.cols(), k);
      const Planed norm = (nm[0].square() + nm[1].square() + nm[2].square()).sqrt();
      BinaryMask valid = norm > 0.0;
      if (((norm - 1.0).abs() > 1e-4 && valid).any())
        throw Error(ErrorKind::ValueOutOfRange, rel.string(), "normal not unit length");
      normals.push_back({std::move(nm), std::move(valid)});
    }
    scene.normals = std::move(normals);
  }

  const std::vector<std::string> layer_dirs = {"albedo", "shading", "residual"};
  if (any_exists(dir, layer_dirs)) {
    std::vector<IntrinsicLayers> layers;
    for (int t = 0; t < n; ++t) {
      IntrinsicLayers l;
      Image3d* dst[] = {&l.albedo, &l.shading, &l.residual};
      for (int i = 0; i < 3; ++i) {
        const fs::path rel = fs::path(layer_dirs[static_cast<std::size_t>(i)]) / frame_name(t, "pfm");
        if (!fs::exists(dir / rel)) throw Error(ErrorKind::MissingFile, rel.string());
        *dst[i] = read_pfm(dir / rel);
        check_dims(rel, dst[i]->rows(), dst[i]->cols(), k);
        if (!dst[i]->all_finite()) throw Error(ErrorKind::ValueOutOfRange, rel.string(), "non-finite value");
      }
      const std::string albedo_rel = (fs::path("albedo") / frame_name(t, "pfm")).string();
      if (l.albedo.min_coeff() < 0.0 || l.albedo.max_coeff() > 1.0)
        throw Error(ErrorKind::ValueOutOfRange, albedo_rel, "albedo outside [0, 1]");
      if (l.shading.min_coeff() < 0.0)
        throw Error(ErrorKind::ValueOutOfRange, (fs::path("shading") / frame_name(t, "pfm")).string(),
                    "negative shading");
      const Image3d lin = srgb_to_linear(scene.frames[static_cast<std::size_t>(t)]).pixels;
      if (max_abs_diff(recompose(l.albedo, l.shading, l.residual), lin) > kDecompositionTolerance)
        throw Error(ErrorKind::ValueOutOfRange, (fs::path("residual") / frame_name(t, "pfm")).string(),
                    "albedo * shading + residual does not reproduce the linear frame");
      layers.push_back(std::move(l));
    }
    scene.layers = std::move(layers);
  }

  scene.tracks = load_tracks(dir / "tracks.json");
  if (scene.tracks.frames() != static_cast<std::size_t>(n))
    throw Error(ErrorKind::DimensionMismatch, "tracks.json",
                std::to_string(scene.tracks.frames()) + " frames of tracks vs " + std::to_string(n) + " images");
  for (std::size_t f = 0; f < scene.tracks.frames(); ++f)
    for (std::size_t i = 0; i < scene.tracks.tracks(); ++i)
      if (scene.tracks.visible[f][i] && !k.contains(scene.tracks.points[f][i]))
        throw Error(ErrorKind::ValueOutOfRange, "tracks.json",
                    "visible track " + std::to_string(i) + " outside the image in frame " + std::to_string(f));

  if (!fs::exists(dir / "splats.ply")) throw Error(ErrorKind::MissingFile, "splats.ply");
  scene.splats = load_splats(dir / "splats.ply");
  scene.config = fs::exists(dir / "config.json") ? load_config(dir / "config.json") : SceneConfig{};
  return scene;
}

// --- outputs ----------------------------------------------------------------

std::string_view stage_dir(Stage stage) {
  switch (stage) {
    case Stage::Preview: return "preview";
    case Stage::Occlusion: return "occlusion";
    case Stage::Refined: return "refined";
    case Stage::Rerender: return "rerender";
    case Stage::Interp: return "interp";
    case Stage::Final: return "final";
  }
  return "unknown";
}

std::vector<fs::path> save_frames(const fs::path& out_dir, Stage stage, const std::vector<Image3d>& frames) {
  std::vector<fs::path> written;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const fs::path p = out_dir / stage_dir(stage) / frame_name(static_cast<int>(t), "png");
    write_png(p, frames[t]);
    written.push_back(p);
  }
  return written;
}

std::vector<Image3d> load_frames(const fs::path& out_dir, Stage stage, std::size_t count) {
  std::vector<Image3d> frames;
  for (std::size_t t = 0; t < count; ++t)
    frames.push_back(read_png(out_dir / stage_dir(stage) / frame_name(static_cast<int>(t), "png")));
  return frames;
}

void save_poses(const fs::path& path, const std::vector<PoseRecord>& poses) {
  json arr = json::array();
  for (const PoseRecord& r : poses) {
    json j = pose_to_json(r.pose);
    arr.push_back({{"t", r.t}, {"q", j["q"]}, {"T", j["T"]}, {"rms_px", r.rms_px}});
  }
  write_text(path, arr.dump(2) + "\n");
}

std::vector<PoseRecord> load_poses(const fs::path& path) {
  const json j = read_json(path);
  std::vector<PoseRecord> out;
  try {
    for (const auto& r : j) out.push_back({r.at("t").get<int>(), pose_from_json(r), r.at("rms_px").get<double>()});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string(), e.what());
  }
  return out;
}

void save_occlusion(const fs::path& out_dir, int index, const Planed& soft, const BinaryMask& binary) {
  write_pfm(out_dir / "occlusion" / frame_name(index, "pfm"), soft);
  write_png(out_dir / "occlusion" / frame_name(index, "png"), Planed(binary.cast<double>()));
}

Planed load_occlusion_soft(const fs::path& out_dir, int index) {
  return read_pfm_plane(out_dir / "occlusion" / frame_name(index, "pfm"));
}

}  // namespace gsplice
