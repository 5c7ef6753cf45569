#include "otrom/mesh.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <sstream>

namespace otrom {

void write_mesh(const std::filesystem::path& path, const Mesh& mesh) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("io", "cannot open " + path.string() + " for writing");
  os << "OTROM-MESH 1\n"
     << "case " << mesh.case_name() << "\n"
     << "element " << to_string(mesh.element_type()) << "\n"
     << "order " << mesh.order() << "\n"
     << "nodes " << mesh.n_nodes() << "\n"
     << "elements " << mesh.n_elements() << "\n"
     << "nodes_per_element " << mesh.n_local() << "\n"
     << "boundary_faces " << mesh.boundary_faces().size() << "\n"
     << "segments " << mesh.segments().size() << "\n"
     << "corners " << mesh.corners().size() << "\n"
     << "end_header\n";
  std::vector<double> xy;
  xy.reserve(2 * mesh.n_nodes());
  for (const auto& x : mesh.nodes()) {
    xy.push_back(x.x());
    xy.push_back(x.y());
  }
  io::write_f64(os, xy.data(), xy.size());
  std::vector<std::int32_t> conn(mesh.connectivity().begin(), mesh.connectivity().end());
  io::write_i32(os, conn.data(), conn.size());
  std::vector<std::int32_t> faces;
  for (const auto& bf : mesh.boundary_faces()) {
    faces.push_back(bf.element);
    faces.push_back(bf.face);
    faces.push_back(bf.segment);
  }
  io::write_i32(os, faces.data(), faces.size());
  os << "\ntags\n";
  for (const auto& s : mesh.segments()) {
    os << s.name << ' ' << to_string(s.kind) << ' ' << to_string(s.curve.kind);
    for (double p : s.curve.params) os << ' ' << io::hexfloat(p);
    os << '\n';
  }
  for (const auto& c : mesh.corners())
    os << "corner " << io::hexfloat(c.x()) << ' ' << io::hexfloat(c.y()) << '\n';
  os << "end\n";
  if (!os) throw InvalidInput("io", "failed writing " + path.string());
}

Mesh read_mesh(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("io", "cannot open " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != "OTROM-MESH 1") throw InvalidInput("io", path.string() + " is not a mesh file");
  const std::string case_name = io::expect_line(is, "case");
  const ElementType type = element_type_from_string(io::expect_line(is, "element"));
  const int order = std::stoi(io::expect_line(is, "order"));
  const int n_nodes = std::stoi(io::expect_line(is, "nodes"));
  const int n_elem = std::stoi(io::expect_line(is, "elements"));
  const int n_local = std::stoi(io::expect_line(is, "nodes_per_element"));
  const int n_faces = std::stoi(io::expect_line(is, "boundary_faces"));
  const int n_segs = std::stoi(io::expect_line(is, "segments"));
  const int n_corners = std::stoi(io::expect_line(is, "corners"));
  io::expect_line(is, "end_header");
  require(n_nodes >= 0 && n_elem >= 0 && n_local > 0 && n_faces >= 0, "io", "bad mesh counts");

  std::vector<double> xy(2 * static_cast<std::size_t>(n_nodes));
  io::read_f64(is, xy.data(), xy.size(), "node");
  std::vector<std::int32_t> conn(static_cast<std::size_t>(n_elem) * n_local);
  io::read_i32(is, conn.data(), conn.size(), "connectivity");
  std::vector<std::int32_t> faces(3 * static_cast<std::size_t>(n_faces));
  io::read_i32(is, faces.data(), faces.size(), "boundary face");

  std::string line;
  std::getline(is, line);  // newline after the binary blocks
  std::getline(is, line);
  if (line != "tags") throw InvalidInput("io", "missing tag table");
  std::vector<BoundarySegment> segs;
  for (int s = 0; s < n_segs; ++s) {
    std::getline(is, line);
    std::istringstream ls(line);
    BoundarySegment seg;
    std::string kind, curve;
    ls >> seg.name >> kind >> curve;
    seg.kind = boundary_kind_from_string(kind);
    seg.curve.kind = curve_kind_from_string(curve);
    for (double& p : seg.curve.params) {
      std::string tok;
      ls >> tok;
      p = io::parse_double(tok);
    }
    if (!ls) throw InvalidInput("io", "bad segment line '" + line + "'");
    segs.push_back(std::move(seg));
  }
  std::vector<Vec2> corners;
  for (int c = 0; c < n_corners; ++c) {
    std::getline(is, line);
    std::istringstream ls(line);
    std::string key, xs, ys;
    ls >> key >> xs >> ys;
    if (key != "corner") throw InvalidInput("io", "bad corner line '" + line + "'");
    corners.emplace_back(io::parse_double(xs), io::parse_double(ys));
  }
  std::vector<Vec2> nodes(n_nodes);
  for (int i = 0; i < n_nodes; ++i) nodes[i] = Vec2(xy[2 * i], xy[2 * i + 1]);
  std::vector<BoundaryFace> bfs(n_faces);
  for (int f = 0; f < n_faces; ++f) bfs[f] = {faces[3 * f], faces[3 * f + 1], faces[3 * f + 2]};
  Mesh mesh(case_name, type, order, std::move(nodes), std::vector<int>(conn.begin(), conn.end()),
            std::move(bfs), std::move(segs), std::move(corners));
  require(mesh.n_local() == n_local, "io", "nodes_per_element does not match element order");
  return mesh;
}

void write_field(const std::filesystem::path& path, const Field& field, double parameter) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("io", "cannot open " + path.string() + " for writing");
  os << "OTROM-FIELD 1\n"
     << "layout " << (field.layout == Layout::continuous ? "continuous" : "discontinuous") << "\n"
     << "rows " << field.n_rows() << "\n"
     << "components " << field.n_components() << "\n"
     << "parameter " << io::hexfloat(parameter) << "\n"
     << "end_header\n";
  const Eigen::MatrixXd t = field.values.transpose();
  io::write_f64(os, t.data(), static_cast<std::size_t>(t.size()));
  if (!os) throw InvalidInput("io", "failed writing " + path.string());
}

Field read_field(const std::filesystem::path& path, double* parameter) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("io", "cannot open " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != "OTROM-FIELD 1") throw InvalidInput("io", path.string() + " is not a field file");
  Field f;
  const std::string layout = io::expect_line(is, "layout");
  require(layout == "continuous" || layout == "discontinuous", "io", "bad layout '" + layout + "'");
  f.layout = layout == "continuous" ? Layout::continuous : Layout::discontinuous;
  const long rows = std::stol(io::expect_line(is, "rows"));
  const long cols = std::stol(io::expect_line(is, "components"));
  const double mu = io::parse_double(io::expect_line(is, "parameter"));
  io::expect_line(is, "end_header");
  require(rows >= 0 && cols > 0, "io", "bad field dimensions");
  Eigen::MatrixXd t(cols, rows);
  io::read_f64(is, t.data(), static_cast<std::size_t>(t.size()), "field");
  f.values = t.transpose();
  if (parameter) *parameter = mu;
  return f;
}

}  // namespace otrom
