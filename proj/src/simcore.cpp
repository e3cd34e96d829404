#include "repsim/simcore.hpp"

#include "repsim/encoder.hpp"

namespace repsim {

namespace {

struct TagName {
  MeasureTag tag;
  const char* name;
};

constexpr TagName kTagNames[] = {
    {MeasureTag::cka, "cka"},           {MeasureTag::mean_cca, "mean_cca"},
    {MeasureTag::pwcca, "pwcca"},       {MeasureTag::svcca, "svcca"},
    {MeasureTag::dot, "dot"},           {MeasureTag::norm, "norm"},
    {MeasureTag::deep_dot, "deep_dot"}, {MeasureTag::deep_cka, "deep_cka"},
    {MeasureTag::contrasim, "contrasim"}, {MeasureTag::contrasim_norm, "contrasim_norm"},
};

}  // namespace

std::string to_string(MeasureTag tag) {
  for (const auto& t : kTagNames) {
    if (t.tag == tag) return t.name;
  }
  return "?";
}

MeasureTag measure_tag_from_string(const std::string& s) {
  for (const auto& t : kTagNames) {
    if (s == t.name) return t.tag;
  }
  throw ConfigError("unknown measure '" + s + "'");
}

bool is_deep(MeasureTag tag) {
  return tag == MeasureTag::deep_dot || tag == MeasureTag::deep_cka || tag == MeasureTag::contrasim ||
         tag == MeasureTag::contrasim_norm;
}

void MeasureKind::validate() const {
  if (tag == MeasureTag::svcca) {
    if (!variance_fraction) throw ConfigError("svcca needs a variance fraction");
    if (!(*variance_fraction > 0.0 && *variance_fraction <= 1.0)) {
      throw ConfigError("variance fraction must be in (0, 1]");
    }
  }
  if (is_deep(tag) && !encoder) throw ConfigError(to_string(tag) + " needs a trained encoder");
}

double closed_form_score(const MeasureKind& kind, const ConstMatrixRef& x, const ConstMatrixRef& y) {
  switch (kind.tag) {
    case MeasureTag::cka:
    case MeasureTag::deep_cka:
      return linear_cka(x, y);
    case MeasureTag::mean_cca:
      return mean_cca(x, y);
    case MeasureTag::pwcca:
      return pwcca(x, y);
    case MeasureTag::svcca:
      if (!kind.variance_fraction) throw ConfigError("svcca needs a variance fraction");
      return svcca(x, y, *kind.variance_fraction);
    case MeasureTag::dot:
      return dot_sim(x, y, kind.normalize_dot);
    case MeasureTag::deep_dot:
    case MeasureTag::contrasim:
      return dot_sim(x, y, true);
    case MeasureTag::norm:
    case MeasureTag::contrasim_norm:
      return norm_sim(x, y);
  }
  throw ConfigError("unhandled measure");
}

double measure_dispatch(const MeasureKind& kind, const RepresentationMatrix& x, const RepresentationMatrix& y) {
  kind.validate();
  if (!is_deep(kind.tag)) return closed_form_score(kind, x.to_f64(), y.to_f64());
  const auto& ey = kind.encoder_y ? *kind.encoder_y : *kind.encoder;
  return closed_form_score(kind, encode_f64(*kind.encoder, x), encode_f64(ey, y));
}

}  // namespace repsim
