#include <algorithm>
#include <cmath>

#include "emr/geometry.hpp"
#include "emr/verifier.hpp"

namespace emr {

IntensityStats::IntensityStats(std::size_t n_labels)
    : moments(n_labels), has_box(n_labels, false), lo(n_labels), hi(n_labels) {}

namespace {

struct CaseStats {
  std::vector<Moments> moments;
  std::vector<BoundingBox> boxes;
};

CaseStats case_stats(const StructureCatalog& catalog, const VoxelGrid& volume, const LabelMap& labels) {
  require_same_shape(volume.dims, labels.dims, "fit");
  const std::size_t n = catalog.size() + 1;
  CaseStats s{std::vector<Moments>(n), std::vector<BoundingBox>(n)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Label l = labels.data[i];
    if (l >= n) fail(ErrorKind::catalog, "fit: label " + std::to_string(l) + " outside catalog");
    const double v = volume.data[i];
    Moments& m = s.moments[l];
    m.weight += 1.0;
    m.sum += v;
    m.sum_sq += v * v;
  }
  for (const auto& e : catalog.entries()) {
    if (s.moments[e.label].weight == 0) continue;
    const BinaryMask m = extract_structure_mask(labels, catalog, e.label);
    s.boxes[e.label] = e.kind == StructureKind::tumor
                           ? bounding_box(m)
                           : bounding_box(largest_component(m, Connectivity::full26));
  }
  return s;
}

}  // namespace

IntensityStats IntensityStats::collect(const StructureCatalog& catalog,
                                       std::span<const TrainingSample> samples) {
  std::vector<CaseStats> per_case(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(samples.size()); ++i)
    if (samples[i].weight > 0)
      per_case[i] = case_stats(catalog, *samples[i].volume, *samples[i].labels);

  IntensityStats out(catalog.size() + 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = samples[i].weight;
    if (!(w > 0)) continue;
    const Dims& d = samples[i].labels->dims;
    const double extent[3] = {double(d.x), double(d.y), double(d.z)};
    for (std::size_t l = 0; l < out.moments.size(); ++l) {
      const Moments& m = per_case[i].moments[l];
      out.moments[l].weight += w * m.weight;
      out.moments[l].sum += w * m.sum;
      out.moments[l].sum_sq += w * m.sum_sq;
      const BoundingBox& b = per_case[i].boxes[l];
      if (l == 0 || b.empty()) continue;
      for (int a = 0; a < 3; ++a) {
        const double lo = double(b.lo[a]) / extent[a], hi = double(b.hi[a] + 1) / extent[a];
        out.lo[l][a] = out.has_box[l] ? std::min(out.lo[l][a], lo) : lo;
        out.hi[l][a] = out.has_box[l] ? std::max(out.hi[l][a], hi) : hi;
      }
      out.has_box[l] = true;
    }
  }
  return out;
}

void IntensityStats::merge(const IntensityStats& other) {
  if (other.moments.size() != moments.size()) fail(ErrorKind::shape, "merging stats of different catalogs");
  for (std::size_t l = 0; l < moments.size(); ++l) {
    moments[l].weight += other.moments[l].weight;
    moments[l].sum += other.moments[l].sum;
    moments[l].sum_sq += other.moments[l].sum_sq;
    if (!other.has_box[l]) continue;
    for (int a = 0; a < 3; ++a) {
      lo[l][a] = has_box[l] ? std::min(lo[l][a], other.lo[l][a]) : other.lo[l][a];
      hi[l][a] = has_box[l] ? std::max(hi[l][a], other.hi[l][a]) : other.hi[l][a];
    }
    has_box[l] = true;
  }
}

GaussianIntensityModel::GaussianIntensityModel(StructureCatalog catalog, ModelOptions options)
    : catalog_(std::move(catalog)), options_(options), classes_(catalog_.size() + 1) {}

void GaussianIntensityModel::fit(std::span<const TrainingSample> samples) {
  if (samples.empty()) fail(ErrorKind::invariant, "fit: empty training set");
  double total = 0.0;
  for (const auto& s : samples) {
    if (!(s.weight >= 0.0)) fail(ErrorKind::invariant, "fit: negative sample weight");
    total += s.weight;
  }
  if (!(total > 0.0)) fail(ErrorKind::invariant, "fit: all sample weights are zero");
  fit(IntensityStats::collect(catalog_, samples));
}

void GaussianIntensityModel::fit(const IntensityStats& stats) {
  if (stats.moments.size() != classes_.size()) fail(ErrorKind::shape, "fit: stats/catalog mismatch");
  for (std::size_t l = 0; l < classes_.size(); ++l) {
    const Moments& m = stats.moments[l];
    ClassModel c;
    c.weight = m.weight;
    c.modeled = m.weight > 0 && (l == 0 || stats.has_box[l]);
    if (c.modeled) {
      c.mean = m.sum / m.weight;
      const double var = std::max(0.0, m.sum_sq / m.weight - c.mean * c.mean);
      c.stddev = std::max(options_.std_floor, std::sqrt(var));
      if (l > 0) {
        c.box_lo = stats.lo[l];
        c.box_hi = stats.hi[l];
      }
    }
    classes_[l] = c;
  }
  if (!classes_[0].modeled) {
    // No background voxels anywhere: keep a flat background that never wins.
    classes_[0].modeled = true;
    classes_[0].mean = 0.0;
    classes_[0].stddev = 1e12;
  }
  fitted_ = true;
}

void GaussianIntensityModel::require_fitted() const {
  if (!fitted_) fail(ErrorKind::invariant, "model used before fitting");
}

std::vector<ClassParams> GaussianIntensityModel::params_for(const Dims& dims) const {
  const double extent[3] = {double(dims.x), double(dims.y), double(dims.z)};
  std::vector<ClassParams> out(classes_.size());
  for (std::size_t l = 0; l < classes_.size(); ++l) {
    const ClassModel& c = classes_[l];
    ClassParams& p = out[l];
    p.label = Label(l);
    p.modeled = c.modeled;
    p.mean = c.mean;
    p.stddev = c.stddev;
    for (int a = 0; a < 3; ++a) {
      // Boxes are stored as voxel edges over extent; the small slack undoes
      // the rounding of that division.
      p.lo[a] = long(std::floor(c.box_lo[a] * extent[a] + 1e-6));
      p.hi[a] = long(std::ceil(c.box_hi[a] * extent[a] - 1e-6)) - 1;
    }
    if (l == 0) {
      p.lo[0] = p.lo[1] = p.lo[2] = 0;
      p.hi[0] = long(dims.x) - 1;
      p.hi[1] = long(dims.y) - 1;
      p.hi[2] = long(dims.z) - 1;
    }
  }
  return out;
}

LabelMap GaussianIntensityModel::predict(const VoxelGrid& volume) const {
  require_fitted();
  validate_grid_geometry(volume.dims, volume.spacing);
  const auto params = params_for(volume.dims);
  LabelMap out(volume.dims, volume.spacing, catalog_.id());
  out.data = kernels::omp::argmax_labels(volume, params);
  for (const auto& e : catalog_.entries()) {
    if (!classes_[e.label].modeled) continue;
    const BinaryMask m = kernels::omp::label_equals(out.data, out.dims, out.spacing, e.label);
    const BinaryMask kept = e.kind == StructureKind::tumor
                                ? drop_small_components(m, Connectivity::face6, options_.min_tumor_voxels)
                                : largest_component(m, Connectivity::full26);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (m.data[i] && !kept.data[i]) out.data[i] = 0;
  }
  return out;
}

ProbabilityMap GaussianIntensityModel::predict_prob(const VoxelGrid& volume, Label tumor) const {
  require_fitted();
  catalog_.at(tumor);
  ProbabilityMap out(volume.dims, volume.spacing, 0.0f);
  if (!classes_[tumor].modeled) return out;
  const auto params = params_for(volume.dims);
  out.data = kernels::omp::class_posterior(volume, params, tumor);
  return out;
}

Json GaussianIntensityModel::to_json() const {
  Json classes = Json::array();
  for (std::size_t l = 0; l < classes_.size(); ++l) {
    const ClassModel& c = classes_[l];
    classes.push_back({{"label", l},
                       {"name", l == 0 ? std::string("background") : catalog_.at(Label(l)).name},
                       {"modeled", c.modeled},
                       {"mean", c.mean},
                       {"std", c.stddev},
                       {"weight", c.weight},
                       {"box_lo", c.box_lo},
                       {"box_hi", c.box_hi}});
  }
  return {{"schema_version", kSchemaVersion},
          {"type", "gaussian_intensity"},
          {"fitted", fitted_},
          {"catalog", catalog_to_json(catalog_)},
          {"options", {{"std_floor", options_.std_floor}, {"min_tumor_voxels", options_.min_tumor_voxels}}},
          {"classes", classes}};
}

GaussianIntensityModel GaussianIntensityModel::from_json(const Json& j) {
  try {
    if (j.at("type") != "gaussian_intensity") fail(ErrorKind::io, "unknown model type");
    ModelOptions o;
    o.std_floor = j.at("options").at("std_floor").get<double>();
    o.min_tumor_voxels = j.at("options").at("min_tumor_voxels").get<std::size_t>();
    GaussianIntensityModel m(catalog_from_json(j.at("catalog")), o);
    const Json& classes = j.at("classes");
    if (classes.size() != m.classes_.size()) fail(ErrorKind::io, "model class count mismatch");
    for (std::size_t l = 0; l < classes.size(); ++l) {
      const Json& c = classes[l];
      ClassModel& cm = m.classes_[l];
      cm.modeled = c.at("modeled").get<bool>();
      cm.mean = c.at("mean").get<double>();
      cm.stddev = c.at("std").get<double>();
      cm.weight = c.at("weight").get<double>();
      cm.box_lo = c.at("box_lo").get<std::array<double, 3>>();
      cm.box_hi = c.at("box_hi").get<std::array<double, 3>>();
    }
    m.fitted_ = j.at("fitted").get<bool>();
    return m;
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, std::string("bad model file: ") + e.what());
  }
}

GaussianIntensityModel fit_model(const Corpus& corpus, const std::vector<double>* weights,
                                 const ModelOptions& options) {
  if (corpus.cases.empty()) fail(ErrorKind::invariant, "fit_model: empty corpus");
  if (weights && weights->size() != corpus.cases.size())
    fail(ErrorKind::shape, "fit_model: one weight per case required");
  std::vector<TrainingSample> samples;
  for (std::size_t i = 0; i < corpus.cases.size(); ++i)
    samples.push_back({&corpus.cases[i].volume, &corpus.cases[i].pseudo, weights ? (*weights)[i] : 1.0});
  GaussianIntensityModel model(corpus.catalog, options);
  model.fit(samples);
  return model;
}

}  // namespace emr
