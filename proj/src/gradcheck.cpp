#include "stenonet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "stenonet/losses.hpp"

namespace stenonet {

namespace {

TensorD random_tensor(const std::vector<int>& shape, Rng& rng, double scale = 1.0) {
    TensorD t(shape);
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

double project(const TensorD& out, const TensorD& r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * r.data[i];
    return acc;
}

}  // namespace

TensorD fd_gradient(const std::function<double(const TensorD&)>& f, TensorD x, double step) {
    TensorD g(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + step;
        const double fp = f(x);
        x.data[i] = keep - step;
        const double fm = f(x);
        x.data[i] = keep;
        g.data[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

bool grads_close(const TensorD& analytic, const TensorD& numeric, double tol, double abs_floor,
                 double* max_rel_error) {
    double worst = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < analytic.data.size(); ++i) {
        const double a = analytic.data[i], n = numeric.data[i];
        const double den = std::max(std::abs(a), std::abs(n));
        const double num = std::abs(a - n);
        if (den < abs_floor) {
            if (num > abs_floor) ok = false;
            continue;
        }
        const double rel = num / den;
        worst = std::max(worst, rel);
        if (rel > tol) ok = false;
    }
    if (max_rel_error) *max_rel_error = worst;
    return ok;
}

GradCheckReport grad_check_graph(GraphT<double>& graph, const std::map<std::string, TensorD>& feeds,
                                 int output, Rng& rng, double tol, double step) {
    GradCheckReport rep;
    rep.what = "graph";

    Tape<double> tape = graph.forward(feeds, Mode::Training);
    TensorD r = random_tensor(tape.vals[static_cast<std::size_t>(output)].shape, rng);
    Grads<double> analytic = graph.backward(tape, output, r);

    auto eval = [&](const std::map<std::string, TensorD>& f) {
        Tape<double> t = graph.forward(f, Mode::Training);
        return project(t.vals[static_cast<std::size_t>(output)], r);
    };

    bool pass = true;
    // parameters
    for (int pid : graph.param_ids()) {
        TensorD& value = graph.param_value(pid);
        TensorD numeric(value.shape);
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            const double keep = value.data[i];
            value.data[i] = keep + step;
            const double fp = eval(feeds);
            value.data[i] = keep - step;
            const double fm = eval(feeds);
            value.data[i] = keep;
            numeric.data[i] = (fp - fm) / (2.0 * step);
        }
        const TensorD& a = analytic.has(pid) ? analytic.g[static_cast<std::size_t>(pid)]
                                             : TensorD(value.shape);
        double worst = 0.0;
        if (!grads_close(a, numeric, tol, 1e-6, &worst)) {
            pass = false;
            rep.detail += "param " + graph.node(pid).name + " max rel " + std::to_string(worst) + "; ";
        }
        rep.max_rel_error = std::max(rep.max_rel_error, worst);
    }
    // inputs
    for (const auto& [name, tensor] : feeds) {
        int nid = graph.find(name);
        std::map<std::string, TensorD> f = feeds;
        TensorD& x = f[name];
        TensorD numeric(x.shape);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double keep = x.data[i];
            x.data[i] = keep + step;
            const double fp = eval(f);
            x.data[i] = keep - step;
            const double fm = eval(f);
            x.data[i] = keep;
            numeric.data[i] = (fp - fm) / (2.0 * step);
        }
        const TensorD& a = analytic.has(nid) ? analytic.g[static_cast<std::size_t>(nid)] : TensorD(x.shape);
        double worst = 0.0;
        if (!grads_close(a, numeric, tol, 1e-6, &worst)) {
            pass = false;
            rep.detail += "input " + name + " max rel " + std::to_string(worst) + "; ";
        }
        rep.max_rel_error = std::max(rep.max_rel_error, worst);
    }
    rep.pass = pass;
    return rep;
}

namespace {

// Margin that keeps the finite-difference step on one side of a kink.
constexpr double kKinkMargin = 1e-3;

bool away_from_kinks_abs(const TensorD& x) {
    for (double v : x.data)
        if (std::abs(v) < kKinkMargin) return false;
    return true;
}

bool max_windows_separated(const TensorD& x, const OpAttrs& a) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int ho = (h - a.kernel_h) / a.stride + 1, wo = (w - a.kernel_w) / a.stride + 1;
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int oi = 0; oi < ho; ++oi)
                for (int oj = 0; oj < wo; ++oj) {
                    double best = -1e300, second = -1e300;
                    for (int ki = 0; ki < a.kernel_h; ++ki)
                        for (int kj = 0; kj < a.kernel_w; ++kj) {
                            double v = x.at(ni, ci, oi * a.stride + ki, oj * a.stride + kj);
                            if (v > best) {
                                second = best;
                                best = v;
                            } else if (v > second) {
                                second = v;
                            }
                        }
                    if (best - second < kKinkMargin) return false;
                }
    return true;
}

bool global_max_separated(const TensorD& x) {
    const int n = x.shape[0], c = x.shape[1];
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const double* p = x.data.data() + (static_cast<std::int64_t>(ni) * c + ci) * plane;
            double best = -1e300, second = -1e300;
            for (std::int64_t i = 0; i < plane; ++i) {
                if (p[i] > best) {
                    second = best;
                    best = p[i];
                } else if (p[i] > second) {
                    second = p[i];
                }
            }
            if (best - second < kKinkMargin) return false;
        }
    return true;
}

struct OpInstance {
    GraphT<double> graph;
    std::map<std::string, TensorD> feeds;
    int output = -1;
    bool ok = true;  // differentiable at the sampled point
};

OpInstance make_instance(OpKind kind, Rng& rng) {
    OpInstance inst;
    auto& g = inst.graph;
    switch (kind) {
        case OpKind::Conv2d: {
            int cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
            int k = rng.uniform_int(1, 3), stride = rng.uniform_int(1, 2);
            int h = rng.uniform_int(2 * k + 2, 8), w = rng.uniform_int(2 * k + 2, 8);
            int pad = rng.uniform_int(0, 1) ? (k - 1) / 2 : 0;
            OpAttrs a;
            a.kernel_h = a.kernel_w = k;
            a.stride = stride;
            a.pad = pad;
            int x = g.input("x", {-1, cin, h, w});
            int wgt = g.param("w", "p", random_tensor({cout, cin, k, k}, rng, 0.5));
            int b = g.param("b", "p", random_tensor({cout}, rng, 0.5));
            inst.output = g.op(OpKind::Conv2d, {x, wgt, b}, a);
            inst.feeds["x"] = random_tensor({rng.uniform_int(1, 2), cin, h, w}, rng);
            break;
        }
        case OpKind::AvgPool2d:
        case OpKind::MaxPool2d: {
            int k = rng.uniform_int(2, 3), stride = rng.uniform_int(1, 2);
            int c = rng.uniform_int(1, 3);
            int h = rng.uniform_int(k + 2, 8), w = rng.uniform_int(k + 2, 8);
            OpAttrs a;
            a.kernel_h = a.kernel_w = k;
            a.stride = stride;
            int x = g.input("x", {-1, c, h, w});
            inst.output = g.op(kind, {x}, a);
            inst.feeds["x"] = random_tensor({rng.uniform_int(1, 2), c, h, w}, rng);
            if (kind == OpKind::MaxPool2d) inst.ok = max_windows_separated(inst.feeds["x"], a);
            break;
        }
        case OpKind::GlobalMaxPool: {
            int c = rng.uniform_int(1, 3), h = rng.uniform_int(3, 6), w = rng.uniform_int(3, 6);
            int x = g.input("x", {-1, c, h, w});
            inst.output = g.op(kind, {x});
            inst.feeds["x"] = random_tensor({rng.uniform_int(1, 2), c, h, w}, rng);
            inst.ok = global_max_separated(inst.feeds["x"]);
            break;
        }
        case OpKind::BatchNorm: {
            int c = rng.uniform_int(1, 3), h = rng.uniform_int(3, 5), w = rng.uniform_int(3, 5);
            int x = g.input("x", {-1, c, h, w});
            int gamma = g.param("gamma", "p", random_tensor({c}, rng, 0.5));
            int beta = g.param("beta", "p", random_tensor({c}, rng, 0.5));
            inst.output = g.op(OpKind::BatchNorm, {x, gamma, beta}, {}, "bn");
            inst.feeds["x"] = random_tensor({4, c, h, w}, rng);
            break;
        }
        case OpKind::LeakyRelu:
        case OpKind::Relu:
        case OpKind::Sigmoid: {
            int c = rng.uniform_int(1, 2), h = rng.uniform_int(2, 5), w = rng.uniform_int(2, 5);
            OpAttrs a;
            a.leak = 0.1;
            int x = g.input("x", {-1, c, h, w});
            inst.output = g.op(kind, {x}, a);
            inst.feeds["x"] = random_tensor({rng.uniform_int(1, 2), c, h, w}, rng);
            if (kind != OpKind::Sigmoid) inst.ok = away_from_kinks_abs(inst.feeds["x"]);
            break;
        }
        case OpKind::Dense: {
            int f = rng.uniform_int(2, 6), o = rng.uniform_int(1, 4);
            int x = g.input("x", {-1, f});
            int w = g.param("w", "p", random_tensor({o, f}, rng, 0.5));
            int b = g.param("b", "p", random_tensor({o}, rng, 0.5));
            inst.output = g.op(OpKind::Dense, {x, w, b});
            inst.feeds["x"] = random_tensor({rng.uniform_int(1, 3), f}, rng);
            break;
        }
        case OpKind::ConcatChannels: {
            int parts = rng.uniform_int(2, 3);
            int h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
            int n = rng.uniform_int(1, 2);
            std::vector<int> ids;
            for (int i = 0; i < parts; ++i) {
                int c = rng.uniform_int(1, 2);
                std::string name = "x" + std::to_string(i);
                ids.push_back(g.input(name, {-1, c, h, w}));
                inst.feeds[name] = random_tensor({n, c, h, w}, rng);
            }
            inst.output = g.op(kind, ids);
            break;
        }
        case OpKind::UpsampleNearest2x: {
            int c = rng.uniform_int(1, 2), h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
            int x = g.input("x", {-1, c, h, w});
            inst.output = g.op(kind, {x});
            inst.feeds["x"] = random_tensor({rng.uniform_int(1, 2), c, h, w}, rng);
            break;
        }
        case OpKind::Add: {
            int c = rng.uniform_int(1, 2), h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
            int n = rng.uniform_int(1, 2);
            int x = g.input("a", {-1, c, h, w});
            int y = g.input("b", {-1, c, h, w});
            inst.output = g.op(kind, {x, y});
            inst.feeds["a"] = random_tensor({n, c, h, w}, rng);
            inst.feeds["b"] = random_tensor({n, c, h, w}, rng);
            break;
        }
        case OpKind::Mse: {
            int n = rng.uniform_int(2, 6);
            int x = g.input("pred", {-1, 1});
            int t = g.input("target", {-1, 1});
            inst.output = g.op(kind, {x, t});
            inst.feeds["pred"] = random_tensor({n, 1}, rng);
            inst.feeds["target"] = random_tensor({n, 1}, rng);
            break;
        }
        default:
            throw std::invalid_argument("grad_check_op: kind has no gradient to check");
    }
    return inst;
}

// FD check of a loss function's analytic gradient w.r.t. its logits.
GradCheckReport check_loss_gradient(const std::string& what, const TensorD& logits,
                                    const std::function<LossGrad<double>(const TensorD&)>& loss, double tol) {
    GradCheckReport rep;
    rep.what = what;
    LossGrad<double> lg = loss(logits);
    TensorD numeric = fd_gradient([&](const TensorD& x) { return loss(x).value; }, logits, 1e-5);
    rep.pass = grads_close(lg.grad, numeric, tol, 1e-6, &rep.max_rel_error);
    return rep;
}

Mask random_mask(int h, int w, double density, Rng& rng) {
    Mask m({h, w});
    for (auto& v : m.data) v = rng.uniform() < density ? 1 : 0;
    return m;
}

}  // namespace

GradCheckReport grad_check_op(OpKind kind, Rng& rng, double tol) {
    GradCheckReport rep;
    rep.what = op_kind_name(kind);
    for (int attempt = 0; attempt < 5; ++attempt) {
        OpInstance inst = make_instance(kind, rng);
        if (!inst.ok) {
            rep.retries++;
            continue;
        }
        GradCheckReport inner = grad_check_graph(inst.graph, inst.feeds, inst.output, rng, tol);
        rep.max_rel_error = inner.max_rel_error;
        rep.pass = inner.pass;
        rep.detail = inner.detail;
        return rep;
    }
    rep.inconclusive = true;
    rep.detail = "kept sampling non-differentiable points";
    return rep;
}

GradCheckSuite run_grad_check_suite(int instances, double tol, std::uint64_t seed) {
    GradCheckSuite suite;
    Rng rng(seed);
    const OpKind kinds[] = {OpKind::Conv2d,    OpKind::AvgPool2d,      OpKind::MaxPool2d,
                            OpKind::GlobalMaxPool, OpKind::BatchNorm,  OpKind::LeakyRelu,
                            OpKind::Relu,      OpKind::Sigmoid,        OpKind::Dense,
                            OpKind::ConcatChannels, OpKind::UpsampleNearest2x, OpKind::Add,
                            OpKind::Mse};
    for (OpKind kind : kinds) {
        for (int i = 0; i < instances; ++i) {
            GradCheckReport rep = grad_check_op(kind, rng, tol);
            suite.all_pass = suite.all_pass && rep.pass && !rep.inconclusive;
            suite.reports.push_back(std::move(rep));
        }
    }

    for (int i = 0; i < instances; ++i) {
        // weighted grid cross-entropy
        {
            GridSpec spec{32, 4, 2, 8};
            LabelGrid labels = region_label_grid(spec, PixelPoint{rng.uniform_int(0, 31), rng.uniform_int(0, 31)});
            TensorD logits = random_tensor({labels.k, labels.k}, rng, 2.0);
            auto rep = check_loss_gradient(
                "weighted_grid_bce", logits,
                [&](const TensorD& x) { return weighted_grid_bce(x, labels, spec.pos_weight()); }, tol);
            suite.all_pass = suite.all_pass && rep.pass;
            suite.reports.push_back(std::move(rep));
        }
        // dice on logits
        {
            int h = rng.uniform_int(5, 9), w = rng.uniform_int(5, 9);
            Mask truth = random_mask(h, w, 0.4, rng);
            TensorD logits = random_tensor({h, w}, rng, 2.0);
            auto rep = check_loss_gradient("dice_loss", logits,
                                           [&](const TensorD& x) { return dice_loss_on_logits(x, truth); }, tol);
            suite.all_pass = suite.all_pass && rep.pass;
            suite.reports.push_back(std::move(rep));
        }
        // morphologically weighted cross-entropy
        {
            int h = 12, w = 12;
            Mask lesion = random_mask(h, w, 0.3, rng);
            Mask silhouette({h, w});
            for (std::size_t j = 0; j < silhouette.data.size(); ++j)
                silhouette.data[j] = (!lesion.data[j] && rng.uniform() < 0.3) ? 1 : 0;
            PixelPoint center{rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)};
            MwceParams params;
            params.sigma_bell = 4.0;
            TensorD logits = random_tensor({h, w}, rng, 2.0);
            auto rep = check_loss_gradient(
                "mwce_loss", logits,
                [&](const TensorD& x) { return mwce_loss(x, lesion, silhouette, center, params); }, tol);
            suite.all_pass = suite.all_pass && rep.pass;
            suite.reports.push_back(std::move(rep));
        }
        // mse
        {
            int n = rng.uniform_int(2, 6);
            TensorD target({n, 1});
            for (auto& v : target.data) v = rng.uniform();
            TensorD pred = random_tensor({n, 1}, rng, 0.5);
            auto rep = check_loss_gradient("mse_loss", pred,
                                           [&](const TensorD& x) { return mse_loss(x, target); }, tol);
            suite.all_pass = suite.all_pass && rep.pass;
            suite.reports.push_back(std::move(rep));
        }
    }
    return suite;
}

}  // namespace stenonet
