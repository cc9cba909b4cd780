#include "kslab/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kslab/error.hpp"

namespace kslab {

DiffusionSpec DiffusionSpec::power(double a0, double alpha) {
  DiffusionSpec d;
  d.kind = DiffusionKind::power;
  d.a0 = a0;
  d.alpha = alpha;
  d.p = 2.0;
  d.validate();
  return d;
}

DiffusionSpec DiffusionSpec::p_laplacian(double p) {
  DiffusionSpec d;
  d.kind = DiffusionKind::p_laplacian;
  d.a0 = 1.0;
  d.alpha = 0.0;
  d.p = p;
  d.validate();
  return d;
}

DiffusionSpec DiffusionSpec::product(double a0, double alpha, double p) {
  DiffusionSpec d;
  d.kind = DiffusionKind::product;
  d.a0 = a0;
  d.alpha = alpha;
  d.p = p;
  d.validate();
  return d;
}

void DiffusionSpec::validate() const {
  require(a0 > 0.0, "diffusion requires a0 > 0");
  require(p > 1.0, "diffusion requires p > 1");
  if (kind == DiffusionKind::power) require(p == 2.0, "power diffusion is the p = 2 case");
  if (kind == DiffusionKind::p_laplacian)
    require(a0 == 1.0 && alpha == 0.0, "p-Laplacian diffusion has a0 = 1 and alpha = 0");
}

double DiffusionSpec::coefficient(double s, double grad_mag, double eps) const {
  double a = a0;
  if (alpha != 0.0) a *= std::pow(s + 1.0, alpha);
  if (p != 2.0) a *= std::pow(grad_mag * grad_mag + eps * eps, 0.5 * (p - 2.0));
  return a;
}

double DiffusionSpec::lower_bound(double s, double grad_mag) const {
  double a = a0;
  if (alpha != 0.0) a *= std::pow(s + 1.0, alpha);
  if (p != 2.0) a *= std::pow(grad_mag, p - 2.0);
  return a;
}

SensitivitySpec SensitivitySpec::prototype(double b0, double beta) {
  SensitivitySpec b;
  b.form = SensitivityForm::prototype;
  b.b0 = b0;
  b.beta = beta;
  return b;
}

SensitivitySpec SensitivitySpec::linear(double chi) {
  SensitivitySpec b;
  b.form = SensitivityForm::linear;
  b.chi = chi;
  return b;
}

SensitivitySpec SensitivitySpec::none() {
  SensitivitySpec b;
  b.form = SensitivityForm::zero;
  return b;
}

double SensitivitySpec::value(double s) const {
  switch (form) {
    case SensitivityForm::prototype:
      return b0 * s * std::pow(s + 1.0, beta - 1.0) + offset;
    case SensitivityForm::linear:
      return chi * s + offset;
    case SensitivityForm::zero:
      return offset;
  }
  return 0.0;
}

double SensitivitySpec::ratio(double s) const {
  if (s > 0.0) return value(s) / s;
  switch (form) {
    case SensitivityForm::prototype:
      return b0;
    case SensitivityForm::linear:
      return chi;
    case SensitivityForm::zero:
      return 0.0;
  }
  return 0.0;
}

double SensitivitySpec::bound_b0() const {
  switch (form) {
    case SensitivityForm::prototype:
      return b0;
    case SensitivityForm::linear:
      return chi;
    case SensitivityForm::zero:
      return 0.0;
  }
  return 0.0;
}

double SensitivitySpec::bound_beta() const {
  switch (form) {
    case SensitivityForm::prototype:
      return beta;
    case SensitivityForm::linear:
      return 1.0;
    case SensitivityForm::zero:
      return 0.0;
  }
  return 0.0;
}

SourceSpec SourceSpec::logistic(double r, double mu, double gamma_exp) {
  SourceSpec f;
  f.form = SourceForm::logistic;
  f.r = r;
  f.mu = mu;
  f.gamma_exp = gamma_exp;
  return f;
}

SourceSpec SourceSpec::zero() { return SourceSpec{}; }

double SourceSpec::value(double s, double w) const {
  if (form == SourceForm::zero) return 0.0;
  double out = r * s - w_coupling * s * w;
  if (mu != 0.0) out -= mu * std::pow(s, 1.0 + gamma_exp);
  return out;
}

double SourceSpec::derivative(double s, double w) const {
  if (form == SourceForm::zero) return 0.0;
  double out = r - w_coupling * w;
  if (mu != 0.0) out -= mu * (1.0 + gamma_exp) * std::pow(s, gamma_exp);
  return out;
}

ProductionSpec ProductionSpec::power(double sigma) { return {ProductionForm::power, sigma}; }
ProductionSpec ProductionSpec::linear() { return {ProductionForm::linear, 1.0}; }
ProductionSpec ProductionSpec::consumption() { return {ProductionForm::consumption, 1.0}; }
ProductionSpec ProductionSpec::none() { return {ProductionForm::none, 1.0}; }

double ProductionSpec::value(double s, double c) const {
  switch (form) {
    case ProductionForm::power:
      return std::pow(s, sigma);
    case ProductionForm::linear:
      return s;
    case ProductionForm::consumption:
      return c - s * c;
    case ProductionForm::none:
      return 0.0;
  }
  return 0.0;
}

std::string DataTuple::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << "p=" << p << ",alpha=" << alpha << ",beta=" << beta << ",a0=" << a0 << ",b0=" << b0
     << ",N=" << dim << ",Omega=" << extent_x << "x" << extent_y;
  return os.str();
}

void ModelSpec::validate() const {
  diffusion.validate();
  require(tau == 0 || tau == 1, "tau must be 0 or 1");
  require(tau == 0 || advection.kind != AdvectionKind::none,
          "tau = 1 requires an advection generator");
  require(sensitivity.form == SensitivityForm::zero || sensitivity.bound_b0() >= 0.0,
          "sensitivity amplitude must be nonnegative");
  require(sensitivity.value(0.0) == 0.0, "sensitivity must satisfy b(0) = 0");
  if (haptotaxis.enabled) {
    require(sensitivity.form == SensitivityForm::linear,
            "haptotaxis requires the linear (chi s) sensitivity");
    require(haptotaxis.xi >= 0.0, "haptotactic coefficient must be nonnegative");
  }
  if (source.form == SourceForm::logistic) {
    require(source.mu >= 0.0, "logistic source requires mu >= 0");
    require(source.gamma_exp > 0.0, "logistic source requires gamma > 0");
  }
  if (production.form == ProductionForm::power)
    require(production.sigma > 0.0, "power production requires sigma > 0");
  if (advection.kind == AdvectionKind::cosine_vortex)
    require(domain.dim() == 2, "the cosine vortex needs a two-dimensional domain");
}

DataTuple ModelSpec::data_tuple() const {
  DataTuple d;
  d.p = diffusion.p;
  d.alpha = diffusion.alpha;
  d.beta = sensitivity.bound_beta();
  d.a0 = diffusion.a0;
  d.b0 = sensitivity.bound_b0();
  d.dim = domain.dim();
  d.extent_x = domain.extent(0);
  d.extent_y = domain.dim() == 2 ? domain.extent(1) : 0.0;
  return d;
}

VectorField ModelSpec::velocity() const {
  if (tau == 1 && advection.kind == AdvectionKind::cosine_vortex)
    return cosine_vortex(domain, advection.amplitude);
  return zero_velocity(domain);
}

double compute_kf(const SourceSpec& source, double margin) {
  const double floor = 1.0 + margin;
  if (source.form == SourceForm::zero) return floor;
  if (source.mu > 0.0) {
    const double root = source.r > 0.0 ? std::pow(source.r / source.mu, 1.0 / source.gamma_exp) : 0.0;
    return std::max(root, floor);
  }
  if (source.r <= 0.0) return floor;
  throw PreconditionError("no K_f exists: f(s) = r s stays positive for r > 0 and mu = 0");
}

bool CheckReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const HypothesisCheck* CheckReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

std::vector<double> state_ladder(int count, double horizon) {
  std::vector<double> s{0.0};
  const double lo = 1e-6;
  for (int k = 0; k < count; ++k)
    s.push_back(lo * std::pow(horizon / lo, static_cast<double>(k) / (count - 1)));
  return s;
}

}  // namespace

CheckReport structural_check(const ModelSpec& model, int sample_count, double horizon,
                             double eps_reg) {
  require(sample_count >= 16, "structural_check requires sample_count >= 16");
  CheckReport report;
  report.horizon = horizon;
  report.outside_hypotheses = model.domain.outside_hypotheses();
  const auto states = state_ladder(sample_count, horizon);

  {
    HypothesisCheck c{"diffusion_lower_bound", true, std::nullopt, ""};
    const DiffusionSpec& d = model.diffusion;
    if (!(d.a0 > 0.0 && d.p > 1.0)) {
      c.passed = false;
      c.detail = "requires a0 > 0 and p > 1";
    } else {
      const std::vector<double> grads{1e-2, 1e-1, 1.0, 10.0, 100.0};
      // Regularization changes a by at most this relative amount on the
      // sampled gradients.
      const double gmin = grads.front();
      const double tol =
          1.0 - std::pow(gmin * gmin / (gmin * gmin + eps_reg * eps_reg), std::abs(d.p - 2.0) / 2.0) +
          1e-12;
      for (double s : states) {
        for (double g : grads) {
          const double a = d.coefficient(s, g, eps_reg);
          const double lower = d.lower_bound(s, g);
          if (a < lower * (1.0 - tol)) {
            c.passed = false;
            c.witness = s;
            c.detail = "a below a0 (s+1)^alpha |xi|^(p-2)";
          }
        }
      }
      if (c.passed) c.detail = "sampled with regularization eps = " + std::to_string(eps_reg);
    }
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c{"sensitivity_vanishes_at_zero", true, std::nullopt, ""};
    const double b_zero = model.sensitivity.value(0.0);
    if (b_zero != 0.0) {
      c.passed = false;
      c.witness = 0.0;
      c.detail = "b(0) = " + std::to_string(b_zero);
    }
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c{"sensitivity_growth_bound", true, std::nullopt, ""};
    const double b0 = model.sensitivity.bound_b0();
    const double beta = model.sensitivity.bound_beta();
    for (double s : states) {
      const double b = model.sensitivity.value(s);
      const double bound = b0 * std::pow(s + 1.0, beta);
      if (b > bound * (1.0 + 1e-12) + 1e-300) {
        c.passed = false;
        c.witness = s;
        c.detail = "b(s) exceeds b0 (s+1)^beta";
        break;
      }
    }
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c{"source_nonnegative_at_zero", true, std::nullopt, ""};
    const double f0 = model.source.value(0.0);
    if (f0 < 0.0) {
      c.passed = false;
      c.witness = 0.0;
      c.detail = "f(0) = " + std::to_string(f0);
    }
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c{"source_eventually_nonpositive", true, std::nullopt, ""};
    try {
      const double kf = compute_kf(model.source);
      for (double s : states) {
        if (s >= kf && model.source.value(s) > 0.0) {
          c.passed = false;
          c.witness = s;
          c.detail = "f(s) > 0 beyond K_f";
          break;
        }
      }
      if (c.passed) {
        const double tail = model.source.value(horizon);
        if (model.source.form == SourceForm::zero || tail == 0.0) {
          c.detail = "f vanishes identically; f <= 0 holds for every s >= K_f = " +
                     std::to_string(kf);
        } else if (tail >= model.source.value(horizon / 10.0)) {
          c.passed = false;
          c.witness = horizon;
          c.detail = "f is not decreasing at the horizon";
        } else {
          c.detail = "K_f = " + std::to_string(kf);
        }
      }
    } catch (const PreconditionError& e) {
      c.passed = false;
      c.witness = horizon;
      c.detail = std::string(e.what()) + "; f(horizon) = " +
                 std::to_string(model.source.value(horizon));
    }
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c{"production_regular", true, std::nullopt, ""};
    const auto& g = model.production;
    if (g.form == ProductionForm::power && !(g.sigma > 0.0)) {
      c.passed = false;
      c.detail = "requires sigma > 0";
    } else if (!std::isfinite(g.value(0.0, 1.0))) {
      c.passed = false;
      c.witness = 0.0;
      c.detail = "g(0) is not finite";
    }
    report.checks.push_back(c);
  }

  {
    HypothesisCheck c{"model_wiring", true, std::nullopt, ""};
    try {
      model.validate();
    } catch (const PreconditionError& e) {
      c.passed = false;
      c.detail = e.what();
    }
    report.checks.push_back(c);
  }

  if (model.haptotaxis.enabled) {
    const double threshold = haptotaxis_p_threshold(model.domain.dim());
    if (!(model.diffusion.p > threshold))
      report.warnings.push_back("p = " + std::to_string(model.diffusion.p) +
                                " is below the Hoelder-regularity threshold " +
                                std::to_string(threshold));
  }
  if (report.outside_hypotheses)
    report.warnings.push_back("one-dimensional domain: outside the N >= 2 hypothesis");
  return report;
}

double haptotaxis_p_threshold(int dim) {
  const double n = dim;
  if (dim <= 2) return 1.0 + 3.0 * n / (2.0 * (n + 1.0));  // lambda -> infinity
  const double lambda = 2.0 * n / (n - 2.0);
  return 1.0 + n * (2.0 * n + 3.0 * lambda) / ((n + 1.0) * (n + 2.0 * lambda));
}

ModelSpec preset(std::string_view name, const StructuredGrid& grid) {
  ModelSpec m;
  m.name = std::string(name);
  m.domain = grid;
  if (name == "example_a") {
    m.diffusion = DiffusionSpec::power(1.0, 0.0);
    m.sensitivity = SensitivitySpec::linear(1.0);
    m.source = SourceSpec::zero();
    m.production = ProductionSpec::power(0.5);
  } else if (name == "example_b") {
    m.diffusion = DiffusionSpec::power(1.0, 0.0);
    m.sensitivity = SensitivitySpec::prototype(1.0, 1.0);
    m.source = SourceSpec::logistic(1.0, 4.0, 1.0);
    m.production = ProductionSpec::linear();
    m.tau = 1;
    m.advection.kind = AdvectionKind::zero;
    m.notes.push_back("fluid equation out of scope: u is held at zero");
  } else if (name == "example_c") {
    m.diffusion = DiffusionSpec::p_laplacian(3.0);
    m.sensitivity = SensitivitySpec::linear(1.0);
    m.haptotaxis = {true, 1.0};
    // f = mu n (1 - n - w) with mu = 1
    m.source = SourceSpec::logistic(1.0, 1.0, 1.0);
    m.source.w_coupling = 1.0;
    m.production = ProductionSpec::linear();
    const double threshold = haptotaxis_p_threshold(grid.dim());
    if (!(m.diffusion.p > threshold))
      m.notes.push_back("warning: p below the Hoelder-regularity threshold " +
                        std::to_string(threshold));
  } else if (name == "example_d") {
    m.diffusion = DiffusionSpec::p_laplacian(3.0);
    m.sensitivity = SensitivitySpec::linear(1.0);
    m.source = SourceSpec::zero();
    m.production = ProductionSpec::consumption();
    m.tau = 1;
    m.advection.kind = AdvectionKind::zero;
    m.notes.push_back("fluid equation out of scope: u is held at zero");
  } else if (name == "general") {
    m.diffusion = DiffusionSpec::power(1.0, 0.0);
    m.sensitivity = SensitivitySpec::prototype(1.0, 1.0);
    m.source = SourceSpec::logistic(1.0, 1.0, 1.0);
    m.production = ProductionSpec::power(1.0);
  } else {
    throw PreconditionError("unknown preset '" + std::string(name) + "'");
  }
  if (grid.outside_hypotheses())
    m.notes.push_back("one-dimensional domain: outside the N >= 2 hypothesis");
  return m;
}

std::string to_string(DiffusionKind kind) {
  switch (kind) {
    case DiffusionKind::power: return "power";
    case DiffusionKind::p_laplacian: return "p_laplacian";
    case DiffusionKind::product: return "product";
  }
  return "?";
}

std::string to_string(SensitivityForm form) {
  switch (form) {
    case SensitivityForm::prototype: return "prototype";
    case SensitivityForm::linear: return "linear";
    case SensitivityForm::zero: return "zero";
  }
  return "?";
}

std::string to_string(SourceForm form) {
  return form == SourceForm::logistic ? "logistic" : "zero";
}

std::string to_string(ProductionForm form) {
  switch (form) {
    case ProductionForm::power: return "power";
    case ProductionForm::linear: return "linear";
    case ProductionForm::consumption: return "consumption";
    case ProductionForm::none: return "none";
  }
  return "?";
}

std::string to_string(AdvectionKind kind) {
  switch (kind) {
    case AdvectionKind::none: return "none";
    case AdvectionKind::zero: return "zero";
    case AdvectionKind::cosine_vortex: return "cosine_vortex";
  }
  return "?";
}

}  // namespace kslab
