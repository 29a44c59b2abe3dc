// Copyright 2026 The sfadapt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sfadapt/pseudolabel/pseudolabel.hpp"

#include <algorithm>
#include <cmath>

#include "sfadapt/errors.hpp"

namespace sfadapt::pseudolabel {

using augment::ChannelKind;

template <class T>
Predictor<T> model_predictor(const model::UNet<T>& net) {
  return [&net](const Tensor<T>& images) {
    auto out = net.forward(images);
    return DensePrediction<T>{model::softmax_channels(out.class_logits), std::move(out.flow)};
  };
}

template <class T>
TtaPrediction<T> tta_predict(const Predictor<T>& predict, const Tensor<T>& images,
                             std::span<const augment::D4Element> transforms) {
  if (transforms.empty()) throw Error("tta_predict: no transforms");
  const std::vector<ChannelKind> flow_kinds{ChannelKind::kVector2, ChannelKind::kVector2};
  TtaPrediction<T> result;
  result.aligned.reserve(transforms.size());

  auto align = [&](augment::D4Element g, const DensePrediction<T>& p) {
    const auto inv = augment::inverse(g);
    result.aligned.push_back({augment::apply_d4(inv, p.prob),
                              augment::apply_d4(inv, p.flow, flow_kinds)});
  };

  if (images.h() == images.w()) {
    // One batched forward over all transformed copies.
    std::vector<Tensor<T>> views;
    views.reserve(transforms.size());
    for (const auto& g : transforms) views.push_back(augment::apply_d4(g, images));
    const DensePrediction<T> all = predict(concat_items<T>(views));
    const int n = images.n();
    for (std::size_t t = 0; t < transforms.size(); ++t) {
      align(transforms[t], {slice_items(all.prob, static_cast<int>(t) * n, n),
                            slice_items(all.flow, static_cast<int>(t) * n, n)});
    }
  } else {
    for (const auto& g : transforms) align(g, predict(augment::apply_d4(g, images)));
  }

  auto average = [&](auto member) {
    const Tensor<T>& first = result.aligned.front().*member;
    std::vector<double> acc(first.size(), 0.0);
    for (const auto& a : result.aligned) {
      const Tensor<T>& t = a.*member;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += t.data()[i];
    }
    Tensor<T> mean(first.shape());
    const double k = static_cast<double>(result.aligned.size());
    for (std::size_t i = 0; i < acc.size(); ++i) mean.data()[i] = static_cast<T>(acc[i] / k);
    return mean;
  };
  result.mean.prob = average(&DensePrediction<T>::prob);
  result.mean.flow = average(&DensePrediction<T>::flow);
  return result;
}

namespace {

template <class T>
Tensor<T> confidence_gap(const Tensor<T>& prob) {
  Tensor<T> u(prob.n(), 1, prob.h(), prob.w());
  const std::size_t hw = prob.shape().plane();
  for (int n = 0; n < prob.n(); ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      T mx = prob.plane(n, 0)[i];
      for (int c = 1; c < prob.c(); ++c) mx = std::max(mx, prob.plane(n, c)[i]);
      u.plane(n, 0)[i] = std::max(T(0), T(1) - mx);
    }
  }
  return u;
}

}  // namespace

template <class T>
Uncertainty<T> compute_uncertainty(std::span<const DensePrediction<T>> aligned) {
  if (aligned.size() < 2) {
    throw Error("compute_uncertainty: need at least two predictions, got " +
                std::to_string(aligned.size()));
  }
  const Shape4 ps = aligned.front().prob.shape();
  const Shape4 fs = aligned.front().flow.shape();
  for (const auto& a : aligned) {
    if (a.prob.shape() != ps || a.flow.shape() != fs) {
      throw ShapeError("compute_uncertainty: predictions differ in shape");
    }
  }
  const double k = static_cast<double>(aligned.size());

  Tensor<T> mean_prob(ps);
  for (std::size_t i = 0; i < mean_prob.size(); ++i) {
    double s = 0.0;
    for (const auto& a : aligned) s += a.prob.data()[i];
    mean_prob.data()[i] = static_cast<T>(s / k);
  }

  Uncertainty<T> u;
  u.u_cls = confidence_gap(mean_prob);
  u.u_flow_comp = Tensor<T>(fs);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    double s = 0.0;
    for (const auto& a : aligned) s += a.flow.data()[i];
    const double m = s / k;
    double ss = 0.0;
    for (const auto& a : aligned) {
      const double d = a.flow.data()[i] - m;
      ss += d * d;
    }
    u.u_flow_comp.data()[i] = static_cast<T>(std::sqrt(ss / k));
  }
  u.u_flow = Tensor<T>(fs.n, 1, fs.h, fs.w);
  for (int n = 0; n < fs.n; ++n) {
    for (std::size_t i = 0; i < fs.plane(); ++i) {
      u.u_flow.plane(n, 0)[i] =
          static_cast<T>(0.5 * (static_cast<double>(u.u_flow_comp.plane(n, 0)[i]) +
                                u.u_flow_comp.plane(n, 1)[i]));
    }
  }
  return u;
}

template <class T>
Uncertainty<T> single_view_uncertainty(const DensePrediction<T>& pred) {
  Uncertainty<T> u;
  u.u_cls = confidence_gap(pred.prob);
  u.u_flow = Tensor<T>(pred.flow.n(), 1, pred.flow.h(), pred.flow.w());
  u.u_flow_comp = Tensor<T>(pred.flow.shape());
  return u;
}

template <class T>
double percentile(std::span<const T> values, double p) {
  if (values.empty()) throw Error("percentile: empty input");
  if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("percentile: p must be in [0, 100]");
  std::vector<T> v(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + lo, v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + lo + 1, v.end());
  return a + frac * (b - a);
}

template <class T>
UncertaintyThresholdState update_thresholds(UncertaintyThresholdState state,
                                            const Uncertainty<T>& u) {
  for (const Tensor<T>* t : {&u.u_cls, &u.u_flow}) {
    if (t->empty()) throw Error("update_thresholds: empty uncertainty map");
    if (!t->all_finite()) throw NumericError("update_thresholds: non-finite uncertainty");
  }
  const double p_cls = percentile(u.u_cls.span(), state.percentile);
  double p_flow = 0.0, p_flow_v = 0.0;
  if (state.per_component) {
    const Tensor<T> cu = slice_channels(u.u_flow_comp, 0, 1);
    const Tensor<T> cv = slice_channels(u.u_flow_comp, 1, 1);
    p_flow = percentile(cu.span(), state.percentile);
    p_flow_v = percentile(cv.span(), state.percentile);
  } else {
    p_flow = percentile(u.u_flow.span(), state.percentile);
  }
  if (!state.initialized) {
    state.q_cls = p_cls;
    state.q_flow = p_flow;
    state.q_flow_v = p_flow_v;
    state.initialized = true;
  } else {
    const double m = state.momentum;
    state.q_cls = m * state.q_cls + (1.0 - m) * p_cls;
    state.q_flow = m * state.q_flow + (1.0 - m) * p_flow;
    state.q_flow_v = m * state.q_flow_v + (1.0 - m) * p_flow_v;
  }
  return state;
}

template <class T>
Masks build_masks(const Uncertainty<T>& u, const UncertaintyThresholdState& state) {
  if (!state.initialized) throw Error("build_masks: threshold state is not initialized");
  Masks m;
  m.p = Tensor<uint8_t>(u.u_cls.shape());
  for (std::size_t i = 0; i < u.u_cls.size(); ++i) {
    m.p.data()[i] = static_cast<double>(u.u_cls.data()[i]) <= state.q_cls ? 1 : 0;
  }
  const Shape4 s = u.u_flow.shape();
  m.f = Tensor<uint8_t>(s.n, 2, s.h, s.w);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < 2; ++c) {
      const T* src = state.per_component ? u.u_flow_comp.plane(n, c) : u.u_flow.plane(n, 0);
      const double q = state.per_component && c == 1 ? state.q_flow_v : state.q_flow;
      uint8_t* dst = m.f.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = static_cast<double>(src[i]) <= q ? 1 : 0;
    }
  }
  return m;
}

template <class T>
double PseudoLabelBundle<T>::mask_fraction_p() const {
  if (masks.p.empty()) return 0.0;
  std::size_t on = std::count(masks.p.values().begin(), masks.p.values().end(), uint8_t{1});
  return static_cast<double>(on) / static_cast<double>(masks.p.size());
}

template <class T>
double PseudoLabelBundle<T>::mask_fraction_f() const {
  if (masks.f.empty()) return 0.0;
  std::size_t on = std::count(masks.f.values().begin(), masks.f.values().end(), uint8_t{1});
  return static_cast<double>(on) / static_cast<double>(masks.f.size());
}

template <class T>
PseudoLabelBundle<T> make_pseudo_labels(const Predictor<T>& teacher, const Tensor<T>& images,
                                        const PseudoLabelOptions& opts,
                                        UncertaintyThresholdState& state) {
  PseudoLabelBundle<T> b;
  if (opts.teacher_tta) {
    TtaPrediction<T> tta = tta_predict(teacher, images);
    b.uncertainty = compute_uncertainty<T>(tta.aligned);
    b.prob = std::move(tta.mean.prob);
    b.flow = std::move(tta.mean.flow);
  } else {
    DensePrediction<T> p = teacher(images);
    b.uncertainty = single_view_uncertainty(p);
    b.prob = std::move(p.prob);
    b.flow = std::move(p.flow);
  }

  const Shape4 ps = b.prob.shape();
  b.labels = Tensor<int32_t>(ps.n, 1, ps.h, ps.w);
  for (int n = 0; n < ps.n; ++n) {
    for (std::size_t i = 0; i < ps.plane(); ++i) {
      int best = 0;
      for (int c = 1; c < ps.c; ++c) {
        if (b.prob.plane(n, c)[i] > b.prob.plane(n, best)[i]) best = c;
      }
      b.labels.plane(n, 0)[i] = best;
    }
  }

  if (opts.confidence_filtering) {
    state = update_thresholds(state, b.uncertainty);
    b.masks = build_masks(b.uncertainty, state);
  } else {
    b.masks.p = Tensor<uint8_t>(ps.n, 1, ps.h, ps.w, 1);
    b.masks.f = Tensor<uint8_t>(ps.n, 2, ps.h, ps.w, 1);
  }
  return b;
}

#define SFADAPT_INSTANTIATE(T)                                                              \
  template Predictor<T> model_predictor(const model::UNet<T>&);                             \
  template TtaPrediction<T> tta_predict(const Predictor<T>&, const Tensor<T>&,              \
                                        std::span<const augment::D4Element>);               \
  template Uncertainty<T> compute_uncertainty(std::span<const DensePrediction<T>>);         \
  template Uncertainty<T> single_view_uncertainty(const DensePrediction<T>&);               \
  template double percentile(std::span<const T>, double);                                   \
  template UncertaintyThresholdState update_thresholds(UncertaintyThresholdState,           \
                                                       const Uncertainty<T>&);              \
  template Masks build_masks(const Uncertainty<T>&, const UncertaintyThresholdState&);      \
  template struct PseudoLabelBundle<T>;                                                     \
  template PseudoLabelBundle<T> make_pseudo_labels(const Predictor<T>&, const Tensor<T>&,   \
                                                   const PseudoLabelOptions&,               \
                                                   UncertaintyThresholdState&);

SFADAPT_INSTANTIATE(float)
SFADAPT_INSTANTIATE(double)

#undef SFADAPT_INSTANTIATE

}  // namespace sfadapt::pseudolabel
