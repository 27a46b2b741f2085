#include "pmme/params_json.hpp"

#include "pmme/error.hpp"

namespace pmme {

namespace {

double number(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw ValidationError(std::string("parameters: missing numeric key '") +
                          key + "'");
  }
  return it->get<double>();
}

}  // namespace

nlohmann::json params_to_json(const ModelParams& theta) {
  nlohmann::json j = {{"omega_z_rad_per_us", theta.omega_z()},
                      {"gamma_z_per_us", theta.gamma_z()},
                      {"gamma_plus_per_us", theta.gamma_plus()},
                      {"gamma_minus_per_us", theta.gamma_minus()},
                      {"kernel", kernel_tag(theta.kernel())}};
  if (const auto* e = std::get_if<ExpKernel>(&theta.kernel())) {
    j["kernel_b0_per_us"] = e->b0;
  } else if (const auto* r = std::get_if<Rational2Kernel>(&theta.kernel())) {
    j["kernel_a0_per_us"] = r->a0;
    j["kernel_b0_per_us2"] = r->b0;
    j["kernel_b1_per_us"] = r->b1;
  }
  return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("parameters: expected an object");
  const std::string tag = j.value("kernel", std::string("delta"));
  KernelSpec kernel;
  if (tag == "delta") {
    kernel = DeltaKernel{};
  } else if (tag == "exp") {
    kernel = ExpKernel{number(j, "kernel_b0_per_us")};
  } else if (tag == "rational2") {
    kernel = Rational2Kernel{number(j, "kernel_a0_per_us"),
                             number(j, "kernel_b0_per_us2"),
                             number(j, "kernel_b1_per_us")};
  } else {
    throw ValidationError("parameters: unknown kernel '" + tag + "'");
  }
  return ModelParams(number(j, "omega_z_rad_per_us"), number(j, "gamma_z_per_us"),
                     number(j, "gamma_plus_per_us"),
                     number(j, "gamma_minus_per_us"), kernel);
}

}  // namespace pmme
