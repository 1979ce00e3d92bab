// Binary cochain/field serialization (JSON header + raw 64-bit floats),
// CSV emission, and config parsing for the CLI.
#ifndef DFORM_IO_HPP
#define DFORM_IO_HPP

#include <string>
#include <vector>

#include "dform/cochain.hpp"
#include "dform/exponent.hpp"
#include "dform/metric.hpp"

namespace dform {

// Layout: magic "DFRM", uint32 header length, JSON header, then doubles.
// Header fields: schema, kind, degree, count, domain_hash.
void saveCochain(const std::string& path, const CubicalComplex& cx, const Cochain& c);
Cochain loadCochain(const std::string& path, const CubicalComplex& cx);

void saveScalarField(const std::string& path, const ScalarField& f);
ScalarField loadScalarField(const std::string& path, const Grid& expected);

void writeCsv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<double>>& rows);

// Config parsing (strict: unknown keys are rejected).
struct ExperimentConfig {
  DomainSpec domain;
  MetricField metric = MetricField::euclidean(2);
  // exponent spec, evaluated against a grid on demand
  std::string exponentKind = "constant";
  double exponentValue = 2.0;
  int exponentAxis = 0;
  double exponentLeft = 2.0, exponentRight = 4.0;
  Vec3 exponentCenter{0.5, 0.5, 0.0};
  double exponentInner = 2.0, exponentOuter = 3.0;
  Vec3 exponentGradient{1.0, 0.0, 0.0};
  double exponentOffset = 2.0;
  int degree = 0;
  std::string problem = "dirichlet";
  double tolerance = 1e-10;
  uint64_t seed = 1;
  std::string outDir = ".";
};

ExperimentConfig parseConfigFile(const std::string& path);
ExperimentConfig parseConfigJson(const std::string& text);
ExponentField exponentFromConfig(const ExperimentConfig& cfg, const Grid& g);

// Exclusive lock file in an output directory; released on destruction.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;

 private:
  std::string path_;
};

}  // namespace dform

#endif
