#include "lst/pointio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lst/errors.hpp"

namespace lst {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& tok, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) fail(line, "'" + tok + "' is not a number");
  return v;
}

long parse_int(const std::string& tok, std::size_t line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) fail(line, "'" + tok + "' is not an integer label");
  return v;
}

}  // namespace

void write_labeled_points(std::ostream& os, const PointCloud& cloud) {
  cloud.validate();
  os << "#columns N_features=" << cloud.feature_count() << " classes=";
  for (std::size_t c = 0; c < cloud.class_names.size(); ++c) os << (c ? "," : "") << cloud.class_names[c];
  os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    os << p[0] << ' ' << p[1] << ' ' << p[2];
    for (double f : cloud.features.row(i)) os << ' ' << f;
    os << ' ' << cloud.labels[i] << '\n';
  }
}

void write_labeled_points(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_labeled_points(os, cloud);
  if (!os) throw DataError("write to " + path.string() + " failed");
}

PointCloud read_labeled_points(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw DataError("line 1: missing #columns header");
  ++lineno;
  const auto head = split_ws(line);
  if (head.size() != 3 || head[0] != "#columns" || head[1].rfind("N_features=", 0) != 0 ||
      head[2].rfind("classes=", 0) != 0) {
    fail(lineno, "expected '#columns N_features=<C> classes=<names>'");
  }
  const long c = parse_int(head[1].substr(11), lineno);
  if (c < 0) fail(lineno, "negative feature count");

  PointCloud cloud;
  {
    std::istringstream names(head[2].substr(8));
    for (std::string name; std::getline(names, name, ',');) {
      if (name.empty()) fail(lineno, "empty class name");
      cloud.class_names.push_back(name);
    }
    if (cloud.class_names.empty()) fail(lineno, "no class names");
  }

  const auto width = static_cast<std::size_t>(c) + 4;
  std::vector<double> feats;
  while (std::getline(is, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != width) {
      fail(lineno, "expected " + std::to_string(width) + " fields, got " + std::to_string(tok.size()));
    }
    Vec3 p{parse_double(tok[0], lineno), parse_double(tok[1], lineno), parse_double(tok[2], lineno)};
    for (double v : p)
      if (!std::isfinite(v)) fail(lineno, "non-finite coordinate");
    for (std::size_t j = 0; j < static_cast<std::size_t>(c); ++j) feats.push_back(parse_double(tok[3 + j], lineno));
    const long label = parse_int(tok.back(), lineno);
    if (label < 0 || static_cast<std::size_t>(label) >= cloud.class_names.size()) {
      fail(lineno, "label " + std::to_string(label) + " outside [0, " +
                       std::to_string(cloud.class_names.size()) + ")");
    }
    cloud.positions.push_back(p);
    cloud.labels.push_back(static_cast<int>(label));
  }
  if (cloud.positions.empty()) throw DataError("no points after header");
  cloud.features = Matrix(cloud.positions.size(), static_cast<std::size_t>(c));
  std::copy(feats.begin(), feats.end(), cloud.features.data());
  return cloud;
}

PointCloud read_labeled_points(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  try {
    return read_labeled_points(is);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_ply(std::ostream& os, std::span<const PlyVertex> vertices) {
  os << "ply\nformat ascii 1.0\nelement vertex " << vertices.size() << '\n'
     << "property double x\nproperty double y\nproperty double z\n"
     << "property int label\nproperty int pred\nproperty int cluster\nend_header\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const PlyVertex& v : vertices) {
    os << v.position[0] << ' ' << v.position[1] << ' ' << v.position[2] << ' ' << v.label << ' '
       << v.pred << ' ' << v.cluster << '\n';
  }
}

void write_ply(const std::filesystem::path& path, std::span<const PlyVertex> vertices) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_ply(os, vertices);
}

}  // namespace lst
