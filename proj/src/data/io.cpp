#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "gfn/datagen.hpp"

namespace gfn {
namespace {

namespace fs = std::filesystem;

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::int64_t header_int(std::istream& in, const char* what, const fs::path& path) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw DataError(path.string() + ": bad PPM " + what + " '" + tok + "'");
  }
  return std::stoll(tok);
}

void write_raw(const fs::path& path, const Tensor<float>& t) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  std::vector<unsigned char> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t v;
    std::memcpy(&v, &t[i], 4);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(v >> (8 * b));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

Tensor<float> read_raw(const fs::path& path, const Shape& shape) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (static_cast<std::int64_t>(bytes.size()) != shape.numel() * 4) {
    throw DataError(path.string() + ": expected " + std::to_string(shape.numel() * 4) + " bytes, found " +
                    std::to_string(bytes.size()));
  }
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    std::memcpy(&t[i], &v, 4);
  }
  return t;
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

Tensor<float> read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  if (header_token(in) != "P6") throw DataError(path.string() + ": not a binary PPM (P6) file");
  const std::int64_t w = header_int(in, "width", path);
  const std::int64_t h = header_int(in, "height", path);
  const std::int64_t maxval = header_int(in, "maxval", path);
  if (w <= 0 || h <= 0) throw DataError(path.string() + ": empty image");
  if (maxval != 255) throw DataError(path.string() + ": only maxval 255 is supported, got " + std::to_string(maxval));
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw DataError(path.string() + ": truncated pixel data");
  }
  Tensor<float> t({1, 3, h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        t.at(0, c, y, x) = static_cast<float>(raw[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0f;
      }
    }
  }
  return t;
}

void write_ppm(const fs::path& path, const Tensor<float>& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_ppm: expected (1,3,h,w), got " + s.str());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << s.w << ' ' << s.h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(s.h * s.w * 3));
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        raw[static_cast<std::size_t>((y * s.w + x) * 3 + c)] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

ImageLoad load_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("input directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  ImageLoad out;
  for (const fs::path& p : files) {
    if (lower_ext(p) != ".ppm") {
      out.rejects.push_back(p.string() + "\tunsupported format");
      continue;
    }
    try {
      out.images.push_back({p.stem().string(), read_ppm(p)});
    } catch (const DataError& e) {
      out.rejects.push_back(p.string() + "\t" + e.what());
    }
  }
  if (out.images.empty()) out.warnings.push_back("no readable images in " + dir.string());
  return out;
}

fs::path save_triplets(const fs::path& dir, std::span<const Triplet> triplets) {
  fs::create_directories(dir / "data");
  const fs::path manifest = dir / kManifestName;
  std::ofstream m(manifest, std::ios::trunc);
  if (!m) throw DataError("cannot write " + manifest.string());
  m << "id\tsource\tscale_index\tscale\tx\ty\tlr_h\tlr_w\tlblur\tl\th\n";
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Triplet& t = triplets[i];
    std::ostringstream stem;
    stem << std::setw(6) << std::setfill('0') << i;
    const std::string base = "data/" + stem.str();
    write_raw(dir / (base + "_lblur.f32"), t.lblur);
    write_raw(dir / (base + "_l.f32"), t.l);
    write_raw(dir / (base + "_h.f32"), t.h);
    std::ostringstream scale;
    scale << std::setprecision(17) << t.scale;
    m << i << '\t' << t.source << '\t' << t.scale_index << '\t' << scale.str() << '\t' << t.x << '\t' << t.y << '\t'
      << t.l.shape().h << '\t' << t.l.shape().w << '\t' << base << "_lblur.f32\t" << base << "_l.f32\t" << base
      << "_h.f32\n";
  }
  if (!m) throw DataError("write failed for " + manifest.string());
  return manifest;
}

std::vector<Triplet> load_triplets(const fs::path& dir) {
  const fs::path manifest = dir / kManifestName;
  std::ifstream m(manifest);
  if (!m) throw DataError("no dataset manifest at " + manifest.string());
  std::string line;
  std::getline(m, line);
  std::vector<Triplet> out;
  while (std::getline(m, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (f.size() != 11) throw DataError(manifest.string() + ": malformed row '" + line + "'");
    Triplet t;
    try {
      t.source = f[1];
      t.scale_index = std::stoi(f[2]);
      t.scale = std::stod(f[3]);
      t.x = std::stoll(f[4]);
      t.y = std::stoll(f[5]);
      const std::int64_t h = std::stoll(f[6]);
      const std::int64_t w = std::stoll(f[7]);
      t.lblur = read_raw(dir / f[8], {1, 3, h, w});
      t.l = read_raw(dir / f[9], {1, 3, h, w});
      t.h = read_raw(dir / f[10], {1, 3, 4 * h, 4 * w});
    } catch (const std::invalid_argument&) {
      throw DataError(manifest.string() + ": malformed row '" + line + "'");
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace gfn
