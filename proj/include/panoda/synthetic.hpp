#pragma once

#include <string>
#include <utility>
#include <vector>

#include "panoda/datapipe.hpp"

namespace panoda::synthetic {

// Procedural cylindrical world rendered twice per scene: a perspective
// pinhole crop (source appearance) and a full equirectangular panorama
// (target appearance). Azimuth is linear in panorama x, elevation linear in
// y, which makes the geometry exactly invertible.
struct SyntheticSceneSpec {
  uint64_t seed = 0;

  int pano_h = 64, pano_w = 256;
  int pin_h = 64, pin_w = 64;
  double pin_hfov_deg = 70.0;   // horizontal FoV of the pinhole camera
  double pano_vfov_deg = 70.0;  // elevation span of the panorama (symmetric)
  double horizon_elev_deg = 0.0;

  int min_buildings = 3, max_buildings = 6;
  double building_min_w_deg = 25.0, building_max_w_deg = 60.0;
  double building_min_top_deg = 8.0, building_max_top_deg = 28.0;

  int min_cars = 2, max_cars = 5;
  double car_min_w_deg = 10.0, car_max_w_deg = 20.0;
  double car_min_h_deg = 6.0, car_max_h_deg = 12.0;

  int min_people = 1, max_people = 3;
  double person_min_w_deg = 2.5, person_max_w_deg = 5.0;
  double person_min_h_deg = 8.0, person_max_h_deg = 16.0;

  int min_sidewalks = 2, max_sidewalks = 4;
  double sidewalk_min_w_deg = 30.0, sidewalk_max_w_deg = 80.0;
  double sidewalk_band_deg = 8.0;  // strip depth just below the horizon

  // appearance shift, applied to the target (panoramic) domain only
  double src_noise = 0.02;
  double tgt_noise = 0.06;
  double tgt_brightness = -0.05;
  double tgt_color_shift = 0.6;  // 0 = source palette, 1 = fully shifted palette

  void validate() const;  // throws on invalid sizes / FoV outside (0, 120]
};

// One rectangular entity in angle space (azimuth wraps).
struct SceneEntity {
  int32_t cls;
  double az_center_deg, az_halfwidth_deg;
  double el_lo_deg, el_hi_deg;
  double jitter[3];
};

struct Scene {
  SyntheticSceneSpec spec;
  std::vector<SceneEntity> people, cars, buildings;
  std::vector<std::pair<double, double>> sidewalk_spans;  // (center, halfwidth)
  double band_jitter[4][3];  // road, sidewalk, building-default, sky jitters

  int32_t class_at(double az_deg, double el_deg) const;
  // base colour (before pixel noise) for one ray in one domain
  void color_at(double az_deg, double el_deg, bool target_domain, double rgb[3]) const;
};

Scene build_scene(const SyntheticSceneSpec& spec, Rng& rng);

// Renders the (pinhole, panorama) pair of one procedural scene. Both records
// carry full labels; the panoramic labels exist for evaluation only.
std::pair<datapipe::SampleRecord, datapipe::SampleRecord> generate_synthetic_pair(
    const SyntheticSceneSpec& spec, Rng& rng);

// Pixel-centre ray directions, shared by renderer and tests.
void pano_ray(const SyntheticSceneSpec& spec, int y, int x, double& az_deg, double& el_deg);
void pinhole_ray(const SyntheticSceneSpec& spec, double view_az_deg, int y, int x, double& az_deg,
                 double& el_deg);

struct SynthCounts {
  int src_train = 200, src_val = 20;
  int tgt_train = 200, tgt_val = 20, tgt_test = 50;
};

// Writes the flat per-split layout (<split>/ + <split>_labels/) for the
// pinhole and pano domains under root, plus a JSON sidecar with the spec and
// seed. Panoramic train labels land in train_labels_ref, which manifests do
// not pick up.
void write_synthetic_dataset(const SyntheticSceneSpec& spec, const SynthCounts& counts,
                             const std::string& root);

}  // namespace panoda::synthetic
