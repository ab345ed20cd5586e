#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mucksim/harness.hpp"

namespace py = pybind11;
using namespace mucksim;

namespace {

py::array_t<double> heights_array(const soil::Heightfield& hf) {
  py::array_t<double> out({hf.ny(), hf.nx()});
  auto r = out.mutable_unchecked<2>();
  for (int iy = 0; iy < hf.ny(); ++iy) {
    for (int ix = 0; ix < hf.nx(); ++ix) r(iy, ix) = hf.at(ix, iy);
  }
  return out;
}

py::array_t<float> depth_array(const sensors::DepthImage& img) {
  py::array_t<float> out({img.height, img.width});
  auto r = out.mutable_unchecked<2>();
  for (int py_ = 0; py_ < img.height; ++py_) {
    for (int px = 0; px < img.width; ++px) r(py_, px) = img.at(px, py_);
  }
  return out;
}

py::dict obs_dict(const sensors::StackedObservation& obs) {
  py::dict d;
  d["depth"] = depth_array(obs.depth);
  d["scalars"] = py::array_t<double>(static_cast<py::ssize_t>(obs.scalars.size()),
                                     obs.scalars.data());
  return d;
}

py::dict outcome_dict(const env::LoadingOutcome& o) {
  py::dict d;
  d["mass_t"] = o.mass_t;
  d["duration_s"] = o.duration_s;
  d["energy_J"] = o.energy_J;
  d["position_error_m"] = o.position_error_m;
  d["failed"] = o.failed;
  d["final_fill"] = o.final_fill;
  d["planarity"] = o.planarity;
  d["target_x"] = o.target_x;
  d["final_x"] = o.final_x;
  d["loading_index"] = o.loading_index;
  d["pile_shape"] = soil::pile_shape_name(o.pile_shape);
  d["pile_generation"] = o.pile_generation;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Underground-loader mucking simulator and RL harness";

  // ---- soil
  py::class_<soil::SoilParams>(m, "SoilParams")
      .def(py::init<>())
      .def_readwrite("density", &soil::SoilParams::density)
      .def_readwrite("friction_angle_deg", &soil::SoilParams::friction_angle_deg)
      .def_readwrite("cohesion", &soil::SoilParams::cohesion)
      .def_readwrite("penetration_scaling", &soil::SoilParams::penetration_scaling);

  py::enum_<soil::PileShape>(m, "PileShape")
      .value("convex", soil::PileShape::convex)
      .value("concave", soil::PileShape::concave)
      .value("left_skewed", soil::PileShape::left_skewed)
      .value("right_skewed", soil::PileShape::right_skewed);

  py::class_<soil::PileSpec>(m, "PileSpec")
      .def(py::init<>())
      .def(py::init([](soil::PileShape shape, double apex, double toe) {
             return soil::PileSpec{shape, apex, toe};
           }),
           py::arg("shape"), py::arg("apex_height") = 4.0, py::arg("toe_position") = 11.0)
      .def_readwrite("shape", &soil::PileSpec::shape)
      .def_readwrite("apex_height", &soil::PileSpec::apex_height)
      .def_readwrite("toe_position", &soil::PileSpec::toe_position);

  py::class_<soil::Heightfield>(m, "Heightfield")
      .def(py::init<int, int, double>(), py::arg("nx"), py::arg("ny"), py::arg("cell_size"))
      .def_property_readonly("nx", &soil::Heightfield::nx)
      .def_property_readonly("ny", &soil::Heightfield::ny)
      .def_property_readonly("cell_size", &soil::Heightfield::cell_size)
      .def_readwrite("generation", &soil::Heightfield::generation)
      .def("heights", &heights_array, "row-major (ny, nx) array of surface heights")
      .def("height_at", &soil::Heightfield::height_at, py::arg("x"), py::arg("y"));

  m.def("sample_soil", [](uint64_t seed) {
    Rng rng(seed);
    return soil::sample_soil(rng);
  }, py::arg("seed"));

  m.def("generate_pile", [](const soil::PileSpec& spec, uint64_t seed) {
    DriftGeometry drift;
    Rng rng(seed);
    return soil::generate_pile(spec, drift, rng);
  }, py::arg("spec"), py::arg("seed") = 1);

  m.def("dig_resistance", [](const soil::SoilParams& sp, double depth, double width) {
    CutState cut;
    cut.depth = depth;
    cut.width = width;
    return soil::dig_resistance(sp, cut);
  }, py::arg("soil"), py::arg("depth"), py::arg("width"));

  m.def("excavate", [](soil::Heightfield& hf, double x0, double x1, double y0, double y1,
                       double plane) { return soil::excavate(hf, {x0, x1, y0, y1, plane}); },
        py::arg("heightfield"), py::arg("x0"), py::arg("x1"), py::arg("y0"), py::arg("y1"),
        py::arg("plane"));

  m.def("pile_mass_tonnes", &soil::pile_mass_tonnes, py::arg("heightfield"), py::arg("soil"));
  m.def("pile_edge_extent", &soil::pile_edge_extent, py::arg("heightfield"));
  m.def("save_pile", &soil::save_pile, py::arg("heightfield"), py::arg("path"));
  m.def("load_pile", &soil::load_pile, py::arg("path"));

  // ---- reward pieces
  m.def("position_reward", &env::position_reward, py::arg("dx_m"));
  m.def("step_reward", &env::step_reward, py::arg("contact_ok"), py::arg("no_slip"),
        py::arg("r_p"), py::arg("r_l"), py::arg("p_w"), py::arg("w1") = 100.0,
        py::arg("w2") = 1e-6);
  m.def("terminal_bonus", &env::terminal_bonus, py::arg("r_p_final"), py::arg("final_fill"));
  m.def("mpa_loading_reward", &env::mpa_loading_reward, py::arg("final_fill"),
        py::arg("edge_extent_m"), py::arg("d0") = 1.4142135623730951);

  // ---- environment
  py::class_<env::EnvConfig>(m, "EnvConfig")
      .def(py::init<>())
      .def_readwrite("physics_dt", &env::EnvConfig::physics_dt)
      .def_readwrite("control_interval", &env::EnvConfig::control_interval)
      .def_readwrite("timeout_s", &env::EnvConfig::timeout_s)
      .def_readwrite("loadings_per_pile_save", &env::EnvConfig::loadings_per_pile_save)
      .def_readwrite("sequence_length", &env::EnvConfig::sequence_length)
      .def_readwrite("w1", &env::EnvConfig::w1)
      .def_readwrite("w2", &env::EnvConfig::w2)
      .def_readwrite("d0", &env::EnvConfig::d0)
      .def_readwrite("fixed_camera_y", &env::EnvConfig::fixed_camera_y);

  py::class_<vehicle::VehicleParams>(m, "VehicleParams")
      .def(py::init<>())
      .def_readwrite("total_mass", &vehicle::VehicleParams::total_mass)
      .def_readwrite("bucket_width", &vehicle::VehicleParams::bucket_width)
      .def_readwrite("bucket_capacity_volume", &vehicle::VehicleParams::bucket_capacity_volume)
      .def_readwrite("max_speed", &vehicle::VehicleParams::max_speed)
      .def_readwrite("engine_power_max", &vehicle::VehicleParams::engine_power_max)
      .def_readwrite("traction_coefficient", &vehicle::VehicleParams::traction_coefficient);

  py::class_<env::LoaderEnv>(m, "LoaderEnv")
      .def(py::init([](const env::EnvConfig& cfg) {
             return new env::LoaderEnv(cfg, vehicle::VehicleParams{}, DriftGeometry{});
           }),
           py::arg("config") = env::EnvConfig{})
      .def("set_pile", &env::LoaderEnv::set_pile, py::arg("heightfield"), py::arg("shape"))
      .def("set_soil", &env::LoaderEnv::set_soil, py::arg("soil"))
      .def("reset_loading",
           [](env::LoaderEnv& e, double target_x) { return obs_dict(e.reset_loading(target_x)); },
           py::arg("target_x"))
      .def("step",
           [](env::LoaderEnv& e, double throttle, double steer_rate, double lift_rate,
              double tilt_rate) {
             auto res = e.step({throttle, steer_rate, lift_rate, tilt_rate});
             py::dict d;
             d["obs"] = obs_dict(res.obs);
             d["reward"] = res.reward;
             d["done"] = res.done;
             d["outcome"] = res.outcome ? py::object(outcome_dict(*res.outcome)) : py::none();
             return d;
           },
           py::arg("throttle"), py::arg("steer_rate"), py::arg("lift_rate"), py::arg("tilt_rate"))
      .def("fixed_camera_depth",
           [](const env::LoaderEnv& e) { return depth_array(e.fixed_camera_depth()); })
      .def("vehicle_camera_depth",
           [](const env::LoaderEnv& e) { return depth_array(e.vehicle_camera_depth()); })
      .def("heightfield", &env::LoaderEnv::heightfield, py::return_value_policy::copy)
      .def_property_readonly("clock", &env::LoaderEnv::clock)
      .def_property_readonly("energy", &env::LoaderEnv::energy)
      .def_property_readonly("done", &env::LoaderEnv::done)
      .def_property_readonly("target_x", &env::LoaderEnv::target_x)
      .def_property_readonly("usable_half_range", &env::LoaderEnv::usable_half_range)
      .def_property_readonly("fill_fraction", [](const env::LoaderEnv& e) {
        return e.vehicle_state().fill_fraction(e.vehicle_params());
      });

  // ---- harness entry points
  m.def("train_from_json",
        [](const std::string& config_json, const std::string& out_dir) {
          const auto cfg = harness::train_config_from_json(config_json);
          const auto res = harness::train(cfg, out_dir);
          py::dict d;
          d["ma_steps"] = res.ma_steps;
          d["episodes"] = res.episodes;
          d["aborted"] = res.aborted;
          d["ma_checkpoint"] = res.ma_checkpoint;
          d["mpa_checkpoint"] = res.mpa_checkpoint;
          d["metrics_path"] = res.metrics_path;
          d["mean_fill_last50"] = res.mean_fill_last50;
          d["failure_ratio_last50"] = res.failure_ratio_last50;
          return d;
        },
        py::arg("config_json"), py::arg("out_dir"));

  m.def("default_train_config_json",
        []() { return harness::train_config_to_json(harness::TrainConfig::desk()); });

  m.def("evaluate_scripted",
        [](int n_loadings, uint64_t seed, bool desk_piles) {
          harness::EvalConfig cfg;
          cfg.n_loadings = n_loadings;
          cfg.seed = seed;
          if (desk_piles) {
            cfg.piles = harness::desk_pile_specs();
            cfg.env.fixed_camera_y = 0.8;
          }
          Rng rng(Rng::mix(seed, 77));
          std::vector<env::LoadingOutcome> outs;
          const auto report = harness::evaluate_with_factory(
              harness::make_random_target_policy(rng, 2.75),
              [](env::LoaderEnv& e) { return harness::make_scripted_ma_policy(e); }, cfg, &outs);
          py::list items;
          for (const auto& o : outs) items.append(outcome_dict(o));
          py::dict d;
          d["report"] = harness::report_to_json(report);
          d["outcomes"] = items;
          return d;
        },
        py::arg("n_loadings") = 8, py::arg("seed") = 1, py::arg("desk_piles") = true);
}
