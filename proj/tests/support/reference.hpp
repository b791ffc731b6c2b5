#pragma once

// Double-precision reference implementations used as gradient oracles. They
// share no code with the float engine under test.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "skywatch/anglenet.hpp"
#include "skywatch/tensor.hpp"

namespace skywatch::reference {

struct DTensor {
    Shape shape;
    std::vector<double> v;
};

DTensor to_double(const Tensor& t);

DTensor conv2d(const DTensor& x, const DTensor& k, const DTensor& b, bool same);
DTensor maxpool2d(const DTensor& x);
DTensor dense(const DTensor& x, const DTensor& w, const DTensor& b);
DTensor relu(const DTensor& x);
DTensor tanh(const DTensor& x);
DTensor concat_channels(const DTensor& a, const DTensor& b);
double mse(const DTensor& pred, const DTensor& target);

/// Full AngleNet forward in double; `params` in AngleNet::parameters() order.
/// `pattern`, when given, receives every relu sign and pool argmax.
double anglenet_forward(const AngleNetConfig& config, const std::vector<DTensor>& params, const DTensor& reference,
                        const DTensor& test, std::vector<std::uint32_t>* pattern = nullptr);

struct OpCheck {
    std::string op;
    std::size_t points = 0;
    double max_rel_error = 0.0;
};

/// Central-difference check of every engine op against its double reference
/// at `points` random inputs. Error per point: ||g_engine - g_fd|| / ||g_fd||
/// over all differentiable inputs, with the loss mse(op(x), target).
std::vector<OpCheck> check_all_ops(std::uint64_t seed, std::size_t points = 10, double step = 1e-4);

struct ParamCheck {
    std::string name;
    std::size_t index = 0;
    double engine = 0.0;
    double finite_difference = 0.0;
    double rel_error = 0.0;
};

/// Compares engine gradients of mse(AngleNet(ref, test), target) with central
/// differences of the double forward for `count` randomly chosen parameters.
/// Parameters whose step flips a relu or pool choice are skipped.
std::vector<ParamCheck> check_anglenet_params(const AngleNet& model, const Image& reference, const Image& test,
                                              double target, std::size_t count, std::uint64_t seed,
                                              double step = 1e-4);

}  // namespace skywatch::reference
