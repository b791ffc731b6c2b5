#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace skywatch::reference {

DTensor to_double(const Tensor& t) {
    const auto d = t.data();
    return {t.shape(), std::vector<double>(d.begin(), d.end())};
}

DTensor conv2d(const DTensor& x, const DTensor& k, const DTensor& b, bool same) {
    const std::size_t cin = x.shape[0], h = x.shape[1], w = x.shape[2];
    const std::size_t cout = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const long ph = same ? static_cast<long>(kh / 2) : 0, pw = same ? static_cast<long>(kw / 2) : 0;
    const std::size_t oh = same ? h : h - kh + 1, ow = same ? w : w - kw + 1;
    DTensor out{{cout, oh, ow}, std::vector<double>(cout * oh * ow)};
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double acc = b.v[o];
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j) {
                            const long sy = static_cast<long>(y + i) - ph, sx = static_cast<long>(xx + j) - pw;
                            if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                            acc += k.v[((o * cin + c) * kh + i) * kw + j] * x.v[(c * h + sy) * w + sx];
                        }
                out.v[(o * oh + y) * ow + xx] = acc;
            }
    return out;
}

DTensor maxpool2d(const DTensor& x) {
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2], oh = h / 2, ow = w / 2;
    DTensor out{{c, oh, ow}, std::vector<double>(c * oh * ow)};
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double m = -INFINITY;
                for (std::size_t i = 0; i < 2; ++i)
                    for (std::size_t j = 0; j < 2; ++j) m = std::max(m, x.v[(ch * h + 2 * y + i) * w + 2 * xx + j]);
                out.v[(ch * oh + y) * ow + xx] = m;
            }
    return out;
}

DTensor dense(const DTensor& x, const DTensor& w, const DTensor& b) {
    const std::size_t m = w.shape[0], n = w.shape[1];
    DTensor out{{m}, std::vector<double>(m)};
    for (std::size_t i = 0; i < m; ++i) {
        double acc = b.v[i];
        for (std::size_t j = 0; j < n; ++j) acc += w.v[i * n + j] * x.v[j];
        out.v[i] = acc;
    }
    return out;
}

DTensor relu(const DTensor& x) {
    DTensor out = x;
    for (auto& v : out.v) v = v > 0.0 ? v : 0.0;
    return out;
}

DTensor tanh(const DTensor& x) {
    DTensor out = x;
    for (auto& v : out.v) v = std::tanh(v);
    return out;
}

DTensor concat_channels(const DTensor& a, const DTensor& b) {
    DTensor out{{a.shape[0] + b.shape[0], a.shape[1], a.shape[2]}, a.v};
    out.v.insert(out.v.end(), b.v.begin(), b.v.end());
    return out;
}

double mse(const DTensor& pred, const DTensor& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) acc += (pred.v[i] - target.v[i]) * (pred.v[i] - target.v[i]);
    return acc / static_cast<double>(pred.v.size());
}

namespace {

// Piecewise-linear choice made by each relu (sign) and pool window (argmax).
void record_relu(const DTensor& x, std::vector<std::uint32_t>* pattern) {
    if (!pattern) return;
    for (double v : x.v) pattern->push_back(v > 0.0);
}

void record_pool(const DTensor& x, std::vector<std::uint32_t>* pattern) {
    if (!pattern) return;
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t xx = 0; xx < w / 2; ++xx) {
                std::uint32_t best = 0;
                double m = -INFINITY;
                for (std::uint32_t k = 0; k < 4; ++k) {
                    const double v = x.v[(ch * h + 2 * y + k / 2) * w + 2 * xx + k % 2];
                    if (v > m) m = v, best = k;
                }
                pattern->push_back(best);
            }
}

}  // namespace

double anglenet_forward(const AngleNetConfig& config, const std::vector<DTensor>& params, const DTensor& reference,
                        const DTensor& test, std::vector<std::uint32_t>* pattern) {
    const std::size_t blocks = config.branch_widths.size();
    auto block = [&](const DTensor& x, const DTensor& k, const DTensor& b) {
        const DTensor pre = conv2d(x, k, b, true);
        record_relu(pre, pattern);
        const DTensor act = relu(pre);
        record_pool(act, pattern);
        return maxpool2d(act);
    };
    auto affine = [&](const DTensor& x, const DTensor& w, const DTensor& b) {
        const DTensor pre = dense(x, w, b);
        record_relu(pre, pattern);
        return relu(pre);
    };
    auto branch = [&](DTensor x) {
        for (std::size_t i = 0; i < blocks; ++i) x = block(x, params[2 * i], params[2 * i + 1]);
        return x;
    };
    std::size_t p = 2 * blocks;
    DTensor x = concat_channels(branch(reference), branch(test));
    x = block(x, params[p], params[p + 1]);
    x.shape = {x.v.size()};
    x = affine(x, params[p + 2], params[p + 3]);
    x = affine(x, params[p + 4], params[p + 5]);
    return affine(x, params[p + 6], params[p + 7]).v.at(0);
}

namespace {

using Inputs = std::vector<DTensor>;

struct OpCase {
    std::string name;
    std::vector<Shape> shapes;
    std::function<Tensor(Tape&, const std::vector<Tensor>&)> run;
    std::function<DTensor(const Inputs&)> ref;
    /// Rejects draws that sit within reach of a kink for the FD step.
    std::function<bool(const Inputs&)> admissible = [](const Inputs&) { return true; };
};

DTensor scalar_tensor(double v) { return {{1}, {v}}; }

bool away_from_zero(const Inputs& in) {
    for (const auto& t : in)
        for (double v : t.v)
            if (std::abs(v) < 1e-2) return false;
    return true;
}

bool distinct_windows(const Inputs& in) {
    const DTensor& x = in[0];
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y + 1 < h; y += 2)
            for (std::size_t xx = 0; xx + 1 < w; xx += 2) {
                double v[4];
                for (std::size_t i = 0; i < 4; ++i) v[i] = x.v[(ch * h + y + i / 2) * w + xx + i % 2];
                std::sort(v, v + 4);
                if (v[3] - v[2] < 1e-2) return false;
            }
    return true;
}

std::vector<OpCase> all_cases() {
    std::vector<OpCase> cases;
    cases.push_back({"conv2d/same",
                     {{2, 5, 6}, {3, 2, 3, 3}, {3}},
                     [](Tape& t, const std::vector<Tensor>& in) {
                         return ops::conv2d(t, in[0], in[1], in[2], Padding::kSame);
                     },
                     [](const Inputs& in) { return conv2d(in[0], in[1], in[2], true); }});
    cases.push_back({"conv2d/valid",
                     {{3, 6, 5}, {2, 3, 3, 3}, {2}},
                     [](Tape& t, const std::vector<Tensor>& in) {
                         return ops::conv2d(t, in[0], in[1], in[2], Padding::kValid);
                     },
                     [](const Inputs& in) { return conv2d(in[0], in[1], in[2], false); }});
    cases.push_back({"maxpool2d",
                     {{2, 4, 6}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::maxpool2d(t, in[0]); },
                     [](const Inputs& in) { return maxpool2d(in[0]); }, distinct_windows});
    cases.push_back({"dense",
                     {{5}, {4, 5}, {4}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::dense(t, in[0], in[1], in[2]); },
                     [](const Inputs& in) { return dense(in[0], in[1], in[2]); }});
    cases.push_back({"relu",
                     {{3, 4}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::relu(t, in[0]); },
                     [](const Inputs& in) { return relu(in[0]); }, away_from_zero});
    cases.push_back({"tanh",
                     {{7}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::tanh(t, in[0]); },
                     [](const Inputs& in) { return tanh(in[0]); }});
    cases.push_back({"concat_channels",
                     {{2, 3, 3}, {1, 3, 3}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::concat_channels(t, in[0], in[1]); },
                     [](const Inputs& in) { return concat_channels(in[0], in[1]); }});
    cases.push_back({"reshape",
                     {{2, 3, 4}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::reshape(t, in[0], {4, 6}); },
                     [](const Inputs& in) { return DTensor{{4, 6}, in[0].v}; }});
    cases.push_back({"flatten",
                     {{2, 3, 2}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::flatten(t, in[0]); },
                     [](const Inputs& in) { return DTensor{{12}, in[0].v}; }});
    cases.push_back({"mse",
                     {{6}},
                     [](Tape& t, const std::vector<Tensor>& in) {
                         return ops::mse(t, in[0], Tensor::from({6}, {0.3f, -0.2f, 0.5f, 0.1f, -0.7f, 0.9f}));
                     },
                     [](const Inputs& in) {
                         const DTensor target = to_double(Tensor::from({6}, {0.3f, -0.2f, 0.5f, 0.1f, -0.7f, 0.9f}));
                         return scalar_tensor(mse(in[0], target));
                     }});
    cases.push_back({"sum",
                     {{3, 5}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::sum(t, in[0]); },
                     [](const Inputs& in) {
                         double s = 0.0;
                         for (double v : in[0].v) s += v;
                         return scalar_tensor(s);
                     }});
    cases.push_back({"add",
                     {{2, 4}, {2, 4}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::add(t, in[0], in[1]); },
                     [](const Inputs& in) {
                         DTensor out = in[0];
                         for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += in[1].v[i];
                         return out;
                     }});
    cases.push_back({"scale",
                     {{9}},
                     [](Tape& t, const std::vector<Tensor>& in) { return ops::scale(t, in[0], 1.75f); },
                     [](const Inputs& in) {
                         DTensor out = in[0];
                         for (auto& v : out.v) v *= static_cast<double>(1.75f);
                         return out;
                     }});
    return cases;
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

std::vector<OpCheck> check_all_ops(std::uint64_t seed, std::size_t points, double step) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uniform(-1.0f, 1.0f);
    std::vector<OpCheck> results;
    for (const auto& c : all_cases()) {
        OpCheck check{c.name, 0, 0.0};
        for (std::size_t point = 0; point < points; ++point) {
            std::vector<Tensor> inputs;
            Inputs ref_inputs;
            do {
                inputs.clear();
                ref_inputs.clear();
                for (const auto& shape : c.shapes) {
                    std::vector<float> values(shape_numel(shape));
                    for (auto& v : values) v = uniform(rng);
                    inputs.push_back(Tensor::from(shape, values, true));
                    ref_inputs.push_back(to_double(inputs.back()));
                }
            } while (!c.admissible(ref_inputs));

            Tape tape;
            const Tensor out = c.run(tape, inputs);
            std::vector<float> target_values(out.numel());
            for (auto& v : target_values) v = uniform(rng);
            const Tensor target = Tensor::from(out.shape(), target_values);
            const DTensor ref_target = to_double(target);
            tape.backward(ops::mse(tape, out, target));

            std::vector<double> engine, fd;
            for (std::size_t k = 0; k < inputs.size(); ++k) {
                for (std::size_t i = 0; i < ref_inputs[k].v.size(); ++i) {
                    engine.push_back(inputs[k].grad()[i]);
                    Inputs plus = ref_inputs, minus = ref_inputs;
                    plus[k].v[i] += step;
                    minus[k].v[i] -= step;
                    fd.push_back((mse(c.ref(plus), ref_target) - mse(c.ref(minus), ref_target)) / (2.0 * step));
                }
            }
            std::vector<double> diff(engine.size());
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = engine[i] - fd[i];
            const double rel = norm(diff) / std::max(norm(fd), 1e-12);
            check.max_rel_error = std::max(check.max_rel_error, rel);
            ++check.points;
        }
        results.push_back(check);
    }
    return results;
}

std::vector<ParamCheck> check_anglenet_params(const AngleNet& model, const Image& reference, const Image& test,
                                              double target, std::size_t count, std::uint64_t seed, double step) {
    AngleNet net = model.clone();
    const auto params = net.parameters();
    const auto names = net.parameter_names();
    for (auto p : params) p.set_requires_grad(true).zero_grad();
    Tape tape;
    const Tensor out = net.forward(tape, to_tensor(reference), to_tensor(test));
    tape.backward(ops::mse(tape, out, Tensor::full({1}, static_cast<float>(target))));

    std::vector<DTensor> base;
    for (const auto& p : params) base.push_back(to_double(p));
    const DTensor ref_img = to_double(to_tensor(reference)), test_img = to_double(to_tensor(test));
    auto loss = [&](const std::vector<DTensor>& ps, std::vector<std::uint32_t>* pattern) {
        const double y = anglenet_forward(net.config(), ps, ref_img, test_img, pattern);
        return (y - target) * (y - target);
    };
    std::vector<std::uint32_t> base_pattern;
    loss(base, &base_pattern);

    std::mt19937_64 rng(seed);
    std::vector<ParamCheck> checks;
    std::size_t attempts = 0;
    while (checks.size() < count) {
        if (++attempts > 1000) throw std::runtime_error("no parameters with a nonzero gradient");
        const std::size_t t = rng() % params.size();
        const std::size_t i = rng() % params[t].numel();
        const double g = params[t].grad()[i];
        if (std::abs(g) < 1e-6) continue;
        auto plus = base, minus = base;
        plus[t].v[i] += step;
        minus[t].v[i] -= step;
        // Central differences only hold where no relu or pool choice flips
        // within the step.
        std::vector<std::uint32_t> plus_pattern, minus_pattern;
        const double fd = (loss(plus, &plus_pattern) - loss(minus, &minus_pattern)) / (2.0 * step);
        if (plus_pattern != base_pattern || minus_pattern != base_pattern) continue;
        checks.push_back({names[t], i, g, fd, std::abs(g - fd) / std::max(std::abs(fd), 1e-12)});
    }
    return checks;
}

}  // namespace skywatch::reference
