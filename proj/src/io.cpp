#include "dform/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dform {

using nlohmann::ordered_json;

static void writeBlob(const std::string& path, const ordered_json& header,
                      const double* data, size_t count) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  std::string hs = header.dump();
  uint32_t len = uint32_t(hs.size());
  os.write("DFRM", 4);
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(hs.data(), len);
  os.write(reinterpret_cast<const char*>(data), count * sizeof(double));
}

static ordered_json readBlob(const std::string& path, std::vector<double>& data) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "DFRM") throw std::runtime_error("bad magic in " + path);
  uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  std::string hs(len, '\0');
  is.read(hs.data(), len);
  ordered_json header = ordered_json::parse(hs);
  size_t count = header.at("count").get<size_t>();
  data.resize(count);
  is.read(reinterpret_cast<char*>(data.data()), count * sizeof(double));
  if (!is) throw std::runtime_error("truncated payload in " + path);
  return header;
}

void saveCochain(const std::string& path, const CubicalComplex& cx, const Cochain& c) {
  ordered_json h;
  h["schema"] = 1;
  h["kind"] = "cochain";
  h["degree"] = c.degree;
  h["count"] = size_t(c.values.size());
  h["domain_hash"] = cx.domainHash();
  writeBlob(path, h, c.values.data(), c.values.size());
}

Cochain loadCochain(const std::string& path, const CubicalComplex& cx) {
  std::vector<double> data;
  ordered_json h = readBlob(path, data);
  if (h.at("kind") != "cochain") throw std::runtime_error("not a cochain file: " + path);
  if (h.at("domain_hash").get<uint64_t>() != cx.domainHash())
    throw std::runtime_error("domain hash mismatch in " + path);
  int r = h.at("degree").get<int>();
  if (int(data.size()) != cx.numCells(r)) throw std::runtime_error("cell count mismatch in " + path);
  Eigen::VectorXd v(data.size());
  for (size_t i = 0; i < data.size(); ++i) v[i] = data[i];
  return Cochain(r, v);
}

void saveScalarField(const std::string& path, const ScalarField& f) {
  ordered_json h;
  h["schema"] = 1;
  h["kind"] = "scalar";
  h["degree"] = 0;
  h["count"] = size_t(f.values.size());
  h["dims"] = {f.grid.dims[0], f.grid.dims[1], f.grid.dims[2]};
  h["h"] = f.grid.h;
  writeBlob(path, h, f.values.data(), f.values.size());
}

ScalarField loadScalarField(const std::string& path, const Grid& expected) {
  std::vector<double> data;
  ordered_json h = readBlob(path, data);
  if (h.at("kind") != "scalar") throw std::runtime_error("not a scalar field: " + path);
  if (int(data.size()) != expected.cellCount())
    throw std::runtime_error("cell count mismatch in " + path);
  ScalarField f(expected);
  for (size_t i = 0; i < data.size(); ++i) f.values[i] = data[i];
  return f;
}

void writeCsv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  char buf[64];
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      os << (i ? "," : "") << buf;
    }
    os << "\n";
  }
}

static void rejectUnknown(const ordered_json& j, std::initializer_list<const char*> keys,
                          const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto k : keys) known |= (it.key() == k);
    if (!known) throw std::runtime_error("unknown key '" + it.key() + "' in " + where);
  }
}

ExperimentConfig parseConfigJson(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  rejectUnknown(j, {"domain", "metric", "exponent", "degree", "problem", "tolerance", "seed",
                    "out"},
                "config");
  ExperimentConfig cfg;
  if (j.contains("domain")) {
    const auto& d = j["domain"];
    rejectUnknown(d, {"kind", "n", "cells", "hole", "h"}, "domain");
    std::string kind = d.at("kind").get<std::string>();
    cfg.domain.n = d.value("n", 2);
    if (d.contains("cells")) {
      auto c = d["cells"].get<std::vector<int>>();
      for (size_t a = 0; a < c.size() && a < 3; ++a) cfg.domain.cells[a] = c[a];
      if (c.size() == 2) cfg.domain.cells[2] = 1;
    }
    cfg.domain.h = d.value("h", 0.0);
    if (kind == "box") {
      cfg.domain.kind = DomainSpec::Kind::Box;
    } else if (kind == "punctured_box") {
      cfg.domain.kind = DomainSpec::Kind::PuncturedBox;
      auto hole = d.at("hole").get<std::vector<std::vector<int>>>();
      for (size_t a = 0; a < hole.size() && a < 3; ++a)
        cfg.domain.hole[a] = {hole[a][0], hole[a][1]};
      for (size_t a = hole.size(); a < 3; ++a) cfg.domain.hole[a] = {0, 0};
    } else if (kind == "lshape") {
      cfg.domain.kind = DomainSpec::Kind::LShape;
    } else if (kind == "halfbox") {
      cfg.domain.kind = DomainSpec::Kind::HalfBox;
    } else {
      throw std::runtime_error("unknown domain kind '" + kind + "'");
    }
  }
  if (j.contains("metric")) {
    const auto& m = j["metric"];
    rejectUnknown(m, {"kind", "values", "axis", "rate", "slope"}, "metric");
    std::string kind = m.at("kind").get<std::string>();
    int n = cfg.domain.n;
    if (kind == "euclidean") {
      cfg.metric = MetricField::euclidean(n);
    } else if (kind == "diag") {
      auto v = m.at("values").get<std::vector<double>>();
      std::array<double, 3> d{1, 1, 1};
      for (size_t a = 0; a < v.size() && a < 3; ++a) d[a] = v[a];
      cfg.metric = MetricField::diagConst(n, d);
    } else if (kind == "exp") {
      cfg.metric = MetricField::diagExp(n, m.value("axis", 0), m.value("rate", 1.0));
    } else if (kind == "lip") {
      cfg.metric = MetricField::diagLip(n, m.value("axis", 0), m.value("slope", 0.25));
    } else {
      throw std::runtime_error("unknown metric kind '" + kind + "'");
    }
  } else {
    cfg.metric = MetricField::euclidean(cfg.domain.n);
  }
  if (j.contains("exponent")) {
    const auto& e = j["exponent"];
    rejectUnknown(e, {"kind", "value", "axis", "left", "right", "center", "inner", "outer",
                      "gradient", "offset"},
                  "exponent");
    cfg.exponentKind = e.at("kind").get<std::string>();
    cfg.exponentValue = e.value("value", 2.0);
    cfg.exponentAxis = e.value("axis", 0);
    cfg.exponentLeft = e.value("left", 2.0);
    cfg.exponentRight = e.value("right", 4.0);
    if (e.contains("center")) {
      auto c = e["center"].get<std::vector<double>>();
      for (size_t a = 0; a < c.size() && a < 3; ++a) cfg.exponentCenter[a] = c[a];
    }
    cfg.exponentInner = e.value("inner", 2.0);
    cfg.exponentOuter = e.value("outer", 3.0);
    if (e.contains("gradient")) {
      auto c = e["gradient"].get<std::vector<double>>();
      for (size_t a = 0; a < c.size() && a < 3; ++a) cfg.exponentGradient[a] = c[a];
    }
    cfg.exponentOffset = e.value("offset", 2.0);
  }
  cfg.degree = j.value("degree", 0);
  cfg.problem = j.value("problem", std::string("dirichlet"));
  cfg.tolerance = j.value("tolerance", 1e-10);
  cfg.seed = j.value("seed", uint64_t(1));
  cfg.outDir = j.value("out", std::string("."));
  return cfg;
}

ExperimentConfig parseConfigFile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parseConfigJson(text);
}

ExponentField exponentFromConfig(const ExperimentConfig& cfg, const Grid& g) {
  const std::string& kind = cfg.exponentKind;
  if (kind == "constant") return ExponentField::constant(g, cfg.exponentValue);
  if (kind == "split") {
    int axis = cfg.exponentAxis;
    double mid = g.origin[axis] + 0.5 * g.dims[axis] * g.h;
    return ExponentField::sample(g, [&](const Vec3& x) {
      return x[axis] < mid ? cfg.exponentLeft : cfg.exponentRight;
    });
  }
  if (kind == "radial") {
    return ExponentField::sample(g, [&](const Vec3& x) {
      double r2 = 0;
      for (int a = 0; a < g.n; ++a)
        r2 += (x[a] - cfg.exponentCenter[a]) * (x[a] - cfg.exponentCenter[a]);
      double t = std::min(1.0, std::sqrt(r2));
      return cfg.exponentInner + (cfg.exponentOuter - cfg.exponentInner) * t;
    });
  }
  if (kind == "affine") {
    return ExponentField::sample(g, [&](const Vec3& x) {
      double v = cfg.exponentOffset;
      for (int a = 0; a < g.n; ++a) v += cfg.exponentGradient[a] * x[a];
      return v;
    });
  }
  throw std::runtime_error("unknown exponent kind '" + kind + "'");
}

DirLock::DirLock(const std::string& dir) : path_(dir + "/.dform.lock") {
  std::ifstream probe(path_);
  if (probe.good()) throw std::runtime_error("output directory is locked: " + path_);
  std::ofstream os(path_);
  if (!os) throw std::runtime_error("cannot create lock file " + path_);
  os << "locked\n";
}

DirLock::~DirLock() { std::remove(path_.c_str()); }

}  // namespace dform
