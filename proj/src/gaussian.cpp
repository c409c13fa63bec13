#include "splat4d/gaussian.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "splat4d/errors.hpp"

namespace splat4d {

Mat3 Gaussian::covariance() const {
  const Mat3 R = unit_rotation().to_matrix();
  const Vec3 s2 = (2.0 * log_scale).array().exp();
  return R * s2.asDiagonal() * R.transpose();
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

const char* const kProperties[] = {
    "x", "y", "z", "rot_w", "rot_x", "rot_y", "rot_z",
    "log_scale_0", "log_scale_1", "log_scale_2", "opacity_logit",
    "color_r", "color_g", "color_b", "ref_time",
};
constexpr int kNumDoubleProps = 15;

void pack(const Gaussian& g, double* d, int32_t* node) {
  d[0] = g.center.x();
  d[1] = g.center.y();
  d[2] = g.center.z();
  for (int i = 0; i < 4; ++i) d[3 + i] = g.rotation[i];
  for (int i = 0; i < 3; ++i) d[7 + i] = g.log_scale[i];
  d[10] = g.opacity_logit;
  for (int i = 0; i < 3; ++i) d[11 + i] = g.color[i];
  d[14] = g.ref_time;
  *node = g.node_index;
}

Gaussian unpack(const double* d, int32_t node) {
  Gaussian g;
  g.center = Vec3(d[0], d[1], d[2]);
  g.rotation = Vec4(d[3], d[4], d[5], d[6]);
  g.log_scale = Vec3(d[7], d[8], d[9]);
  g.opacity_logit = d[10];
  g.color = Vec3(d[11], d[12], d[13]);
  g.ref_time = d[14];
  g.node_index = node;
  return g;
}

}  // namespace

void save_ply(const std::string& path, const std::vector<Gaussian>& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);

  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  for (const char* p : kProperties) out << "property double " << p << "\n";
  out << "property int node_index\n";
  out << "end_header\n";

  for (const Gaussian& g : cloud) {
    double d[kNumDoubleProps];
    int32_t node = 0;
    pack(g, d, &node);
    out.write(reinterpret_cast<const char*>(d), sizeof(d));
    out.write(reinterpret_cast<const char*>(&node), sizeof(node));
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Gaussian> load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  std::string line;
  std::getline(in, line);
  if (line != "ply") throw IoError(path + ": not a ply file");
  std::getline(in, line);
  if (line != "format binary_little_endian 1.0")
    throw IoError(path + ": unsupported ply format: " + line);

  size_t count = 0;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment") continue;
    if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw IoError(path + ": unexpected element: " + name);
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    } else {
      throw IoError(path + ": unexpected header line: " + line);
    }
  }

  std::vector<std::string> want;
  for (const char* p : kProperties) want.push_back(std::string("double ") + p);
  want.push_back("int node_index");
  if (props != want) throw IoError(path + ": property layout mismatch");

  std::vector<Gaussian> cloud;
  cloud.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    double d[kNumDoubleProps];
    int32_t node = 0;
    in.read(reinterpret_cast<char*>(d), sizeof(d));
    in.read(reinterpret_cast<char*>(&node), sizeof(node));
    if (!in) throw IoError(path + ": truncated vertex data");
    cloud.push_back(unpack(d, node));
  }
  return cloud;
}

}  // namespace splat4d
