#include "panoda/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "panoda/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace panoda::synthetic {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kRoad = 0, kSidewalk = 1, kBuilding = 2, kSky = 10, kPerson = 11, kCar = 13;

inline double wrap_deg(double a) {
  while (a >= 180.0) a -= 360.0;
  while (a < -180.0) a += 360.0;
  return a;
}

inline bool in_span(double az, double center, double halfwidth) {
  return std::abs(wrap_deg(az - center)) <= halfwidth;
}

// Source and shifted palettes (RGB in [0,1]) indexed by palette slot.
constexpr int kSlotRoad = 0, kSlotSidewalk = 1, kSlotBuilding = 2, kSlotSky = 3, kSlotPerson = 4,
              kSlotCar = 5;
constexpr double kSrcPalette[6][3] = {
    {0.33, 0.33, 0.36},  // road: dark asphalt
    {0.58, 0.55, 0.52},  // sidewalk: light paving
    {0.46, 0.34, 0.30},  // building: brick
    {0.55, 0.70, 0.92},  // sky: blue
    {0.78, 0.24, 0.22},  // person: red jacket
    {0.18, 0.28, 0.62},  // car: blue metal
};
// The shifted palette moves road/sidewalk grey levels toward each other's
// source values and desaturates the rest, which is what makes the
// source-trained model stumble on the target domain.
constexpr double kTgtPalette[6][3] = {
    {0.52, 0.51, 0.50},  // road: washed-out concrete
    {0.36, 0.35, 0.37},  // sidewalk: dark slabs
    {0.36, 0.38, 0.44},  // building: grey-blue
    {0.78, 0.76, 0.74},  // sky: overcast
    {0.60, 0.38, 0.20},  // person
    {0.42, 0.26, 0.48},  // car
};

int slot_of(int32_t cls) {
  switch (cls) {
    case kRoad: return kSlotRoad;
    case kSidewalk: return kSlotSidewalk;
    case kBuilding: return kSlotBuilding;
    case kSky: return kSlotSky;
    case kPerson: return kSlotPerson;
    case kCar: return kSlotCar;
    default: throw std::logic_error("unknown synthetic class");
  }
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  if (pano_h <= 0 || pano_w <= 0 || pin_h <= 0 || pin_w <= 0)
    throw std::invalid_argument("synthetic spec: image sizes must be positive");
  if (pin_hfov_deg <= 0.0 || pin_hfov_deg > 120.0)
    throw std::invalid_argument("synthetic spec: pinhole FoV must be in (0, 120] degrees");
  if (pano_vfov_deg <= 0.0 || pano_vfov_deg > 180.0)
    throw std::invalid_argument("synthetic spec: panorama vertical FoV out of range");
  if (min_buildings < 0 || max_buildings < min_buildings || min_cars < 0 ||
      max_cars < min_cars || min_people < 0 || max_people < min_people || min_sidewalks < 0 ||
      max_sidewalks < min_sidewalks)
    throw std::invalid_argument("synthetic spec: entity count ranges are invalid");
  if (tgt_color_shift < 0.0 || tgt_color_shift > 1.0)
    throw std::invalid_argument("synthetic spec: tgt_color_shift must be in [0,1]");
}

int32_t Scene::class_at(double az, double el) const {
  for (const auto& p : people)
    if (el >= p.el_lo_deg && el <= p.el_hi_deg && in_span(az, p.az_center_deg, p.az_halfwidth_deg))
      return p.cls;
  for (const auto& c : cars)
    if (el >= c.el_lo_deg && el <= c.el_hi_deg && in_span(az, c.az_center_deg, c.az_halfwidth_deg))
      return c.cls;
  if (el >= spec.horizon_elev_deg) {
    for (const auto& b : buildings)
      if (el <= b.el_hi_deg && in_span(az, b.az_center_deg, b.az_halfwidth_deg)) return b.cls;
    return kSky;
  }
  if (el >= spec.horizon_elev_deg - spec.sidewalk_band_deg)
    for (const auto& [center, half] : sidewalk_spans)
      if (in_span(az, center, half)) return kSidewalk;
  return kRoad;
}

void Scene::color_at(double az, double el, bool target_domain, double rgb[3]) const {
  const SceneEntity* hit = nullptr;
  for (const auto& p : people)
    if (el >= p.el_lo_deg && el <= p.el_hi_deg && in_span(az, p.az_center_deg, p.az_halfwidth_deg)) {
      hit = &p;
      break;
    }
  if (!hit)
    for (const auto& c : cars)
      if (el >= c.el_lo_deg && el <= c.el_hi_deg &&
          in_span(az, c.az_center_deg, c.az_halfwidth_deg)) {
        hit = &c;
        break;
      }
  if (!hit && el >= spec.horizon_elev_deg)
    for (const auto& b : buildings)
      if (el <= b.el_hi_deg && in_span(az, b.az_center_deg, b.az_halfwidth_deg)) {
        hit = &b;
        break;
      }

  int32_t cls;
  const double* jitter;
  if (hit) {
    cls = hit->cls;
    jitter = hit->jitter;
  } else {
    cls = class_at(az, el);
    switch (cls) {
      case kRoad: jitter = band_jitter[0]; break;
      case kSidewalk: jitter = band_jitter[1]; break;
      case kBuilding: jitter = band_jitter[2]; break;
      default: jitter = band_jitter[3]; break;  // sky
    }
  }
  const int slot = slot_of(cls);
  const double t = target_domain ? spec.tgt_color_shift : 0.0;
  for (int c = 0; c < 3; ++c) {
    double base = (1.0 - t) * kSrcPalette[slot][c] + t * kTgtPalette[slot][c];
    rgb[c] = std::clamp(base + jitter[c], 0.0, 1.0);
  }
}

Scene build_scene(const SyntheticSceneSpec& spec, Rng& rng) {
  spec.validate();
  Scene s;
  s.spec = spec;

  auto jitter3 = [&rng](double* j, double amp) {
    for (int c = 0; c < 3; ++c) j[c] = rng.uniform(-amp, amp);
  };
  for (int b = 0; b < 4; ++b) jitter3(s.band_jitter[b], 0.03);

  const int n_buildings = static_cast<int>(rng.uniform_int(spec.min_buildings, spec.max_buildings));
  for (int i = 0; i < n_buildings; ++i) {
    SceneEntity e{};
    e.cls = kBuilding;
    e.az_center_deg = rng.uniform(-180.0, 180.0);
    e.az_halfwidth_deg = 0.5 * rng.uniform(spec.building_min_w_deg, spec.building_max_w_deg);
    e.el_lo_deg = spec.horizon_elev_deg;
    e.el_hi_deg = rng.uniform(spec.building_min_top_deg, spec.building_max_top_deg);
    jitter3(e.jitter, 0.06);
    s.buildings.push_back(e);
  }

  const int n_sidewalks = static_cast<int>(rng.uniform_int(spec.min_sidewalks, spec.max_sidewalks));
  for (int i = 0; i < n_sidewalks; ++i)
    s.sidewalk_spans.emplace_back(rng.uniform(-180.0, 180.0),
                                  0.5 * rng.uniform(spec.sidewalk_min_w_deg, spec.sidewalk_max_w_deg));

  const int n_cars = static_cast<int>(rng.uniform_int(spec.min_cars, spec.max_cars));
  for (int i = 0; i < n_cars; ++i) {
    SceneEntity e{};
    e.cls = kCar;
    e.az_center_deg = rng.uniform(-180.0, 180.0);
    e.az_halfwidth_deg = 0.5 * rng.uniform(spec.car_min_w_deg, spec.car_max_w_deg);
    const double top = spec.horizon_elev_deg - rng.uniform(1.0, 4.0);
    e.el_hi_deg = top;
    e.el_lo_deg = top - rng.uniform(spec.car_min_h_deg, spec.car_max_h_deg);
    jitter3(e.jitter, 0.07);
    s.cars.push_back(e);
  }

  const int n_people = static_cast<int>(rng.uniform_int(spec.min_people, spec.max_people));
  for (int i = 0; i < n_people; ++i) {
    SceneEntity e{};
    e.cls = kPerson;
    e.az_center_deg = rng.uniform(-180.0, 180.0);
    e.az_halfwidth_deg = 0.5 * rng.uniform(spec.person_min_w_deg, spec.person_max_w_deg);
    const double h = rng.uniform(spec.person_min_h_deg, spec.person_max_h_deg);
    e.el_lo_deg = spec.horizon_elev_deg - 0.3 * h;
    e.el_hi_deg = spec.horizon_elev_deg + 0.7 * h;
    jitter3(e.jitter, 0.05);
    s.people.push_back(e);
  }
  return s;
}

void pano_ray(const SyntheticSceneSpec& spec, int y, int x, double& az_deg, double& el_deg) {
  az_deg = -180.0 + 360.0 * (x + 0.5) / spec.pano_w;
  el_deg = 0.5 * spec.pano_vfov_deg - spec.pano_vfov_deg * (y + 0.5) / spec.pano_h;
}

void pinhole_ray(const SyntheticSceneSpec& spec, double view_az_deg, int y, int x, double& az_deg,
                 double& el_deg) {
  const double tan_h = std::tan(0.5 * spec.pin_hfov_deg * kPi / 180.0);
  const double vfov = spec.pin_hfov_deg * spec.pin_h / spec.pin_w;  // square pixels on axis
  const double tan_v = std::tan(0.5 * vfov * kPi / 180.0);
  const double u = 2.0 * (x + 0.5) / spec.pin_w - 1.0;
  const double v = 2.0 * (y + 0.5) / spec.pin_h - 1.0;
  az_deg = wrap_deg(view_az_deg + std::atan(u * tan_h) * 180.0 / kPi);
  el_deg = std::atan(-v * tan_v / std::hypot(1.0, u * tan_h)) * 180.0 / kPi;
}

namespace {

datapipe::SampleRecord render(const Scene& scene, bool target_domain, double view_az_deg,
                              bool pano, Rng& noise_rng, const std::string& id) {
  const auto& spec = scene.spec;
  const int h = pano ? spec.pano_h : spec.pin_h;
  const int w = pano ? spec.pano_w : spec.pin_w;
  datapipe::SampleRecord rec;
  rec.domain = target_domain ? datapipe::Domain::target : datapipe::Domain::source;
  rec.id = id;
  rec.image = Tensor({3, h, w});
  rec.label = LabelGrid(h, w);
  const double noise_amp = target_domain ? spec.tgt_noise : spec.src_noise;
  const double brightness = target_domain ? spec.tgt_brightness : 0.0;
  double rgb[3];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double az, el;
      if (pano)
        pano_ray(spec, y, x, az, el);
      else
        pinhole_ray(spec, view_az_deg, y, x, az, el);
      rec.label->at(y, x) = scene.class_at(az, el);
      scene.color_at(az, el, target_domain, rgb);
      for (int c = 0; c < 3; ++c) {
        const double noisy = rgb[c] + brightness + noise_amp * (2.0 * noise_rng.uniform() - 1.0);
        rec.image.data()[(static_cast<int64_t>(c) * h + y) * w + x] = std::clamp(noisy, 0.0, 1.0);
      }
    }
  }
  return rec;
}

}  // namespace

std::pair<datapipe::SampleRecord, datapipe::SampleRecord> generate_synthetic_pair(
    const SyntheticSceneSpec& spec, Rng& rng) {
  Scene scene = build_scene(spec, rng);
  const double view_az = rng.uniform(-180.0, 180.0);
  auto pin = render(scene, /*target=*/false, view_az, /*pano=*/false, rng, "pin");
  auto pano = render(scene, /*target=*/true, view_az, /*pano=*/true, rng, "pano");
  return {std::move(pin), std::move(pano)};
}

namespace {

std::vector<uint8_t> to_rgb8(const Tensor& img) {
  const int h = img.dim(1), w = img.dim(2);
  std::vector<uint8_t> out(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out[(static_cast<size_t>(y) * w + x) * 3 + c] = static_cast<uint8_t>(
            std::lround(255.0 * img.data()[(static_cast<int64_t>(c) * h + y) * w + x]));
  return out;
}

std::vector<uint8_t> to_gray8(const LabelGrid& g) {
  std::vector<uint8_t> out(g.v.size());
  for (size_t i = 0; i < g.v.size(); ++i) out[i] = static_cast<uint8_t>(g.v[i]);
  return out;
}

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d.png", i);
  return buf;
}

}  // namespace

void write_synthetic_dataset(const SyntheticSceneSpec& spec, const SynthCounts& counts,
                             const std::string& root) {
  spec.validate();
  struct SplitJob {
    const char* domain;
    const char* split;
    int count;
    bool keep_pano;
    bool write_labels;
    const char* label_dir;  // null -> "<split>_labels"
    uint64_t tag;
  };
  const SplitJob jobs[] = {
      {"pinhole", "train", counts.src_train, false, true, nullptr, 1},
      {"pinhole", "val", counts.src_val, false, true, nullptr, 2},
      {"pano", "train", counts.tgt_train, true, true, "train_labels_ref", 3},
      {"pano", "val", counts.tgt_val, true, true, nullptr, 4},
      {"pano", "test", counts.tgt_test, true, true, nullptr, 5},
  };

  for (const auto& job : jobs) {
    if (job.count <= 0) continue;
    const fs::path img_dir = fs::path(root) / job.domain / job.split;
    fs::create_directories(img_dir);
    fs::path lab_dir;
    if (job.write_labels) {
      lab_dir = fs::path(root) / job.domain /
                (job.label_dir ? std::string(job.label_dir) : job.split + std::string("_labels"));
      fs::create_directories(lab_dir);
    }
    for (int i = 0; i < job.count; ++i) {
      Rng rng(Rng::mix(spec.seed, job.tag, static_cast<uint64_t>(i)));
      auto [pin, pano] = generate_synthetic_pair(spec, rng);
      const datapipe::SampleRecord& rec = job.keep_pano ? pano : pin;
      io::write_png_rgb((img_dir / index_name(i)).string(), rec.image.dim(2), rec.image.dim(1),
                        to_rgb8(rec.image));
      if (job.write_labels)
        io::write_png_gray((lab_dir / index_name(i)).string(), rec.label->w, rec.label->h,
                           to_gray8(*rec.label));
    }
  }

  json meta;
  meta["seed"] = spec.seed;
  meta["pano"] = {{"h", spec.pano_h}, {"w", spec.pano_w}, {"vfov_deg", spec.pano_vfov_deg}};
  meta["pinhole"] = {{"h", spec.pin_h}, {"w", spec.pin_w}, {"hfov_deg", spec.pin_hfov_deg}};
  meta["appearance"] = {{"src_noise", spec.src_noise},
                        {"tgt_noise", spec.tgt_noise},
                        {"tgt_brightness", spec.tgt_brightness},
                        {"tgt_color_shift", spec.tgt_color_shift}};
  meta["counts"] = {{"src_train", counts.src_train},
                    {"src_val", counts.src_val},
                    {"tgt_train", counts.tgt_train},
                    {"tgt_val", counts.tgt_val},
                    {"tgt_test", counts.tgt_test}};
  std::ofstream out(fs::path(root) / "synthetic_spec.json");
  out << meta.dump(2) << "\n";
}

}  // namespace panoda::synthetic
