#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plhm/channel.hpp"
#include "plhm/codec.hpp"
#include "plhm/field.hpp"
#include "plhm/hmm.hpp"
#include "plhm/io.hpp"
#include "plhm/kernel.hpp"
#include "plhm/preprocess.hpp"
#include "plhm/rng.hpp"

namespace {

using namespace plhm;

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) throw std::runtime_error("empty entry in list: " + csv);
        out.push_back(std::stod(tok));
    }
    return out;
}

std::vector<uint32_t> parse_uints(const std::string& csv) {
    std::vector<uint32_t> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) throw std::runtime_error("empty entry in list: " + csv);
        unsigned long v = std::stoul(tok);
        out.push_back(static_cast<uint32_t>(v));
    }
    return out;
}

HiddenMarkovSource load_model(const std::string& path) {
    return parse_model_json(read_text_file(path));
}

MixingKernel make_kernel(FieldModulus mod, const std::string& kernel_csv) {
    if (kernel_csv.empty()) return default_kernel(mod);
    auto vals = parse_uints(kernel_csv);
    uint32_t k = static_cast<uint32_t>(std::lround(std::sqrt(static_cast<double>(vals.size()))));
    if (static_cast<size_t>(k) * k != vals.size() || k < 2)
        throw std::runtime_error("--kernel needs k*k entries for some k >= 2");
    FieldMatrix M(mod, k, k);
    for (uint32_t i = 0; i < k; ++i)
        for (uint32_t j = 0; j < k; ++j) {
            uint32_t v = vals[i * k + j];
            if (v >= mod.q) throw std::runtime_error("--kernel entry out of field range");
            M.at(i, j) = static_cast<uint16_t>(v);
        }
    auto val = validate_mixing(M);
    if (!val.ok) throw std::runtime_error("kernel rejected: " + val.reason);
    return val.kernel;
}

SetsFile load_sets_checked(const std::string& path, const HiddenMarkovSource& src) {
    SetsFile f = decode_sets(read_file(path));
    if (f.meta.q != src.mod.q) throw std::runtime_error("sets file field does not match model");
    if (f.meta.model_hash != model_hash(src))
        throw std::runtime_error("sets file was built for a different model (hash mismatch)");
    return f;
}

FieldMatrix matrix_from_flat(const std::vector<uint16_t>& v, FieldModulus mod, uint32_t m) {
    if (v.size() != static_cast<size_t>(m) * m)
        throw std::runtime_error("input must hold exactly " + std::to_string(static_cast<size_t>(m) * m) +
                                 " symbols");
    FieldMatrix Z(mod, m, m);
    for (size_t i = 0; i < v.size(); ++i) {
        if (v[i] >= mod.q) throw std::runtime_error("input symbol out of field range");
        Z.a[i] = v[i];
    }
    return Z;
}

std::vector<uint16_t> flatten(const FieldMatrix& Z) {
    return Z.a;
}

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

double default_threshold(uint32_t m, double gamma) {
    double n = static_cast<double>(m) * m;
    return std::max(1.0 / (n * n * n), 4.0 * gamma);
}

struct CommonArgs {
    std::string model;
    std::string kernel_csv;
    uint32_t t = 3;
    double eps = 0.1;
    double gamma = 0.01;
    uint32_t samples = 2000;
    double threshold = -1;  // <0 means: use the default rule
    uint64_t seed = 1;
    unsigned jobs = 1;
    size_t support_cap = 512;
};

PreprocessOptions make_opts(const CommonArgs& a, uint32_t m) {
    PreprocessOptions o;
    o.epsilon = a.eps;
    o.samples = a.samples;
    o.gamma = a.gamma;
    o.threshold = a.threshold >= 0 ? a.threshold : default_threshold(m, a.gamma);
    o.seed = a.seed;
    o.jobs = a.jobs;
    o.rounding.support_cap = a.support_cap;
    return o;
}

int run_preprocess(const CommonArgs& a, const std::string& out) {
    auto src = load_model(a.model);
    auto kernel = make_kernel(src.mod, a.kernel_csv);
    TensorTransform tt(kernel, a.t);
    auto opts = make_opts(a, tt.m);
    SelectionSets sets = polar_preprocess(src, tt, opts);
    SetsFile f;
    f.meta = {static_cast<uint16_t>(src.mod.q), static_cast<uint8_t>(kernel.k),
              static_cast<uint8_t>(a.t),        a.eps,
              opts.threshold,                   a.gamma,
              a.samples,                        a.seed,
              model_hash(src)};
    f.sets = sets;
    write_file(out, encode_sets(f));
    std::cout << "columns " << sets.m << ", selected " << sets.total_selected() << ", rate "
              << fmt_g(sets.achieved_rate()) << "\n";
    return 0;
}

int run_compress(const std::string& model, const std::string& sets_path,
                 const std::string& kernel_csv, const std::string& in, const std::string& out,
                 bool with_crc) {
    auto src = load_model(model);
    SetsFile f = load_sets_checked(sets_path, src);
    auto kernel = make_kernel(src.mod, kernel_csv);
    if (kernel.k != f.meta.k) throw std::runtime_error("kernel size does not match sets file");
    TensorTransform tt(kernel, f.meta.t);
    auto syms = decode_symbols(read_file(in));
    FieldMatrix Z = matrix_from_flat(syms, src.mod, tt.m);
    CompressedPayload p = compress(Z, f.sets, tt, f.meta.model_hash, with_crc);
    write_file(out, encode_payload(p));
    std::cout << "emitted " << p.total_symbols() << " of " << syms.size() << " symbols\n";
    return 0;
}

int run_decompress(const std::string& model, const std::string& sets_path,
                   const std::string& kernel_csv, const std::string& in, const std::string& out) {
    auto src = load_model(model);
    SetsFile f = load_sets_checked(sets_path, src);
    auto kernel = make_kernel(src.mod, kernel_csv);
    if (kernel.k != f.meta.k) throw std::runtime_error("kernel size does not match sets file");
    TensorTransform tt(kernel, f.meta.t);
    CompressedPayload p = decode_payload(read_file(in));
    if (p.model_hash != f.meta.model_hash)
        throw std::runtime_error("payload was built for a different model (hash mismatch)");
    DecodeReport rep = decompress(src, p, f.sets, tt);
    write_file(out, encode_symbols(flatten(rep.z)));
    if (!rep.inference_ok) std::cerr << "decode failure: inference hit a zero-likelihood symbol\n";
    if (p.has_crc() && !rep.crc_ok) std::cerr << "decode failure: crc mismatch\n";
    return rep.ok() ? 0 : 2;
}

int run_channel_encode(const std::string& model, const std::string& sets_path,
                       const std::string& kernel_csv, uint64_t seed, const std::string& msg_path,
                       const std::string& out) {
    auto src = load_model(model);
    SetsFile f = load_sets_checked(sets_path, src);
    auto kernel = make_kernel(src.mod, kernel_csv);
    if (kernel.k != f.meta.k) throw std::runtime_error("kernel size does not match sets file");
    TensorTransform tt(kernel, f.meta.t);
    ChannelCode code(f.sets, tt);
    FieldVector x(src.mod, code.r);
    if (!msg_path.empty()) {
        auto syms = decode_symbols(read_file(msg_path));
        if (syms.size() != code.r)
            throw std::runtime_error("message must hold exactly " + std::to_string(code.r) + " symbols");
        for (size_t i = 0; i < syms.size(); ++i) {
            if (syms[i] >= src.mod.q) throw std::runtime_error("message symbol out of field range");
            x.v[i] = syms[i];
        }
    } else {
        Rng rng(derive_seed(seed, 0x6d736728));
        for (uint32_t i = 0; i < code.r; ++i) x.v[i] = static_cast<uint16_t>(rng.symbol(src.mod.q));
    }
    FieldVector c = channel_encode(code, f.sets, tt, x);
    ChannelTranscript tr;
    tr.q = static_cast<uint16_t>(src.mod.q);
    tr.model_hash = f.meta.model_hash;
    tr.x = x.v;
    tr.c = c.v;
    write_file(out, encode_transcript(tr));
    std::cout << "message " << code.r << " symbols, block " << code.n << "\n";
    return 0;
}

int run_channel_transmit(const std::string& model, uint64_t seed, const std::string& in,
                         const std::string& out) {
    auto src = load_model(model);
    ChannelTranscript tr = decode_transcript(read_file(in));
    if (tr.model_hash != model_hash(src))
        throw std::runtime_error("transcript was built for a different model (hash mismatch)");
    if (tr.c.empty()) throw std::runtime_error("transcript has no codeword; run channel encode first");
    FieldVector c(src.mod, tr.c);
    FieldVector y = sample_sequence(src, c.size(), derive_seed(seed, 0x6e6f6973));
    FieldVector z(src.mod, c.size());
    for (size_t i = 0; i < c.size(); ++i)
        z.v[i] = static_cast<uint16_t>(fadd(c.v[i], y.v[i], src.mod.q));
    tr.y = y.v;
    tr.z = z.v;
    write_file(out, encode_transcript(tr));
    return 0;
}

int run_channel_decode(const std::string& model, const std::string& sets_path,
                       const std::string& kernel_csv, const std::string& in,
                       const std::string& out) {
    auto src = load_model(model);
    SetsFile f = load_sets_checked(sets_path, src);
    auto kernel = make_kernel(src.mod, kernel_csv);
    if (kernel.k != f.meta.k) throw std::runtime_error("kernel size does not match sets file");
    TensorTransform tt(kernel, f.meta.t);
    ChannelCode code(f.sets, tt);
    ChannelTranscript tr = decode_transcript(read_file(in));
    if (tr.model_hash != f.meta.model_hash)
        throw std::runtime_error("transcript was built for a different model (hash mismatch)");
    if (tr.z.empty()) throw std::runtime_error("transcript has no received word; run channel transmit first");
    ChannelDecodeResult res = channel_decode(code, f.sets, tt, src, FieldVector(src.mod, tr.z));
    write_file(out, encode_symbols(res.x_hat.v));
    bool matched = tr.x.empty() || tr.x == res.x_hat.v;
    if (!res.inference_ok) std::cerr << "decode failure: inference hit a zero-likelihood symbol\n";
    if (!tr.x.empty())
        std::cout << (matched ? "message recovered\n" : "message mismatch\n");
    return (res.inference_ok && matched) ? 0 : 2;
}

int run_experiment(const CommonArgs& a, size_t trials, const std::string& out) {
    auto t0 = std::chrono::steady_clock::now();
    auto src = load_model(a.model);
    auto kernel = make_kernel(src.mod, a.kernel_csv);
    TensorTransform tt(kernel, a.t);
    auto opts = make_opts(a, tt.m);
    SelectionSets sets = polar_preprocess(src, tt, opts);

    ProbeOptions popts;
    popts.jobs = a.jobs;
    ProbeReport probe = decompress_success_probe(src, sets, tt, trials,
                                                 derive_seed(a.seed, 0x70726f6265ull), popts);
    size_t n = static_cast<size_t>(tt.m) * tt.m;
    EntropyEstimate ent = estimate_entropy_rate(src, n, 32, derive_seed(a.seed, 0x656e74ull));
    auto wall =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);

    std::ostringstream csv;
    csv << "model,q,k,t,n,epsilon,gamma,R,threshold,achieved_rate,entropy_estimate,"
           "entropy_stderr,trials,failures,wall_time_ms,seed\n";
    csv << src.name << ',' << src.mod.q << ',' << kernel.k << ',' << a.t << ',' << n << ','
        << fmt_g(a.eps) << ',' << fmt_g(a.gamma) << ',' << a.samples << ','
        << fmt_g(opts.threshold) << ',' << fmt_g(probe.achieved_rate) << ',' << fmt_g(ent.mean)
        << ',' << fmt_g(ent.stderr_) << ',' << probe.trials << ',' << probe.failures << ','
        << wall.count() << ',' << a.seed << '\n';
    write_text_file(out, csv.str());
    std::cout << "rate " << fmt_g(probe.achieved_rate) << ", entropy " << fmt_g(ent.mean)
              << ", failures " << probe.failures << "/" << probe.trials << "\n";
    return 0;
}

int run_sample(const std::string& model, size_t n, uint64_t seed, const std::string& out) {
    auto src = load_model(model);
    FieldVector x = sample_sequence(src, n, seed);
    write_file(out, encode_symbols(x.v));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"polar compression of hidden-Markov sources over prime fields"};
    app.require_subcommand(1);
    int rc = 0;

    // model generators
    auto* model_cmd = app.add_subcommand("model", "write a model file");
    model_cmd->require_subcommand(1);
    {
        auto* ge = model_cmd->add_subcommand("gilbert-elliott", "two-state bursty bit flipper");
        auto delta = std::make_shared<double>(0.1);
        auto p = std::make_shared<double>(0.1);
        auto qs = std::make_shared<double>(0.05);
        auto out = std::make_shared<std::string>();
        ge->add_option("--delta", *delta, "flip probability in the nice state");
        ge->add_option("--p", *p, "noisy-to-nice switch probability");
        ge->add_option("--q-switch", *qs, "nice-to-noisy switch probability");
        ge->add_option("--out", *out, "output model file")->required();
        ge->callback([=, &rc] {
            write_text_file(*out, model_to_json(build_gilbert_elliott(*delta, *p, *qs)));
            rc = 0;
        });
    }
    {
        auto* lpn = model_cmd->add_subcommand("lpn", "noisy-parity block source");
        auto a_csv = std::make_shared<std::string>("1,0,1");
        auto eta = std::make_shared<double>(0.05);
        auto out = std::make_shared<std::string>();
        lpn->add_option("--a", *a_csv, "secret bit vector, comma separated");
        lpn->add_option("--eta", *eta, "parity noise rate");
        lpn->add_option("--out", *out, "output model file")->required();
        lpn->callback([=, &rc] {
            auto bits = parse_uints(*a_csv);
            std::vector<uint8_t> a(bits.size());
            for (size_t i = 0; i < bits.size(); ++i) {
                if (bits[i] > 1) throw std::runtime_error("--a entries must be bits");
                a[i] = static_cast<uint8_t>(bits[i]);
            }
            write_text_file(*out, model_to_json(build_lpn_source(a, *eta)));
            rc = 0;
        });
    }
    {
        auto* iid = model_cmd->add_subcommand("iid", "memoryless source");
        auto q = std::make_shared<uint32_t>(2);
        auto probs = std::make_shared<std::string>();
        auto p1 = std::make_shared<double>(-1);
        auto out = std::make_shared<std::string>();
        iid->add_option("--q", *q, "field size (prime)");
        iid->add_option("--probs", *probs, "emission law, comma separated");
        iid->add_option("--p1", *p1, "shorthand for a Bernoulli law over F_2");
        iid->add_option("--out", *out, "output model file")->required();
        iid->callback([=, &rc] {
            std::vector<double> law;
            if (*p1 >= 0) {
                if (*q != 2) throw std::runtime_error("--p1 only makes sense with --q 2");
                law = {1.0 - *p1, *p1};
            } else if (!probs->empty()) {
                law = parse_doubles(*probs);
            } else {
                throw std::runtime_error("iid model needs --probs or --p1");
            }
            write_text_file(*out, model_to_json(build_iid_source(FieldModulus(*q), law)));
            rc = 0;
        });
    }

    auto add_common = [](CLI::App* cmd, const std::shared_ptr<CommonArgs>& a) {
        cmd->add_option("--model", a->model, "model file")->required();
        cmd->add_option("--kernel", a->kernel_csv, "mixing matrix, row-major comma separated");
        cmd->add_option("--t", a->t, "tensor power");
        cmd->add_option("--eps", a->eps, "fraction of trailing columns emitted whole");
        cmd->add_option("--gamma", a->gamma, "empirical-law net resolution");
        cmd->add_option("--samples", a->samples, "sampled prefixes per column");
        cmd->add_option("--threshold", a->threshold, "selection threshold (default max(1/n^3, 4*gamma))");
        cmd->add_option("--seed", a->seed, "rng seed");
        cmd->add_option("--jobs", a->jobs, "worker threads");
        cmd->add_option("--support-cap", a->support_cap, "support size cap for law rounding");
    };

    {
        auto* pre = app.add_subcommand("preprocess", "estimate entropies and pick selection sets");
        auto a = std::make_shared<CommonArgs>();
        auto out = std::make_shared<std::string>();
        add_common(pre, a);
        pre->add_option("--out", *out, "output sets file")->required();
        pre->callback([=, &rc] { rc = run_preprocess(*a, *out); });
    }
    {
        auto* cp = app.add_subcommand("compress", "compress one block of symbols");
        auto model = std::make_shared<std::string>();
        auto sets = std::make_shared<std::string>();
        auto kernel = std::make_shared<std::string>();
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto crc = std::make_shared<bool>(false);
        cp->add_option("--model", *model, "model file")->required();
        cp->add_option("--sets", *sets, "selection sets file")->required();
        cp->add_option("--kernel", *kernel, "mixing matrix, row-major comma separated");
        cp->add_option("--in", *in, "input symbols")->required();
        cp->add_option("--out", *out, "output payload")->required();
        cp->add_flag("--crc", *crc, "append a crc of the source block");
        cp->callback([=, &rc] { rc = run_compress(*model, *sets, *kernel, *in, *out, *crc); });
    }
    {
        auto* dc = app.add_subcommand("decompress", "reconstruct a block from a payload");
        auto model = std::make_shared<std::string>();
        auto sets = std::make_shared<std::string>();
        auto kernel = std::make_shared<std::string>();
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        dc->add_option("--model", *model, "model file")->required();
        dc->add_option("--sets", *sets, "selection sets file")->required();
        dc->add_option("--kernel", *kernel, "mixing matrix, row-major comma separated");
        dc->add_option("--in", *in, "input payload")->required();
        dc->add_option("--out", *out, "output symbols")->required();
        dc->callback([=, &rc] { rc = run_decompress(*model, *sets, *kernel, *in, *out); });
    }

    auto* chan = app.add_subcommand("channel", "additive-noise coding built on the compressor");
    chan->require_subcommand(1);
    {
        auto* enc = chan->add_subcommand("encode", "embed a message into a codeword");
        auto model = std::make_shared<std::string>();
        auto sets = std::make_shared<std::string>();
        auto kernel = std::make_shared<std::string>();
        auto seed = std::make_shared<uint64_t>(1);
        auto msg = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        enc->add_option("--model", *model, "model file")->required();
        enc->add_option("--sets", *sets, "selection sets file")->required();
        enc->add_option("--kernel", *kernel, "mixing matrix, row-major comma separated");
        enc->add_option("--seed", *seed, "seed for a random message");
        enc->add_option("--message", *msg, "message symbols (default: sampled from the seed)");
        enc->add_option("--out", *out, "output transcript")->required();
        enc->callback([=, &rc] { rc = run_channel_encode(*model, *sets, *kernel, *seed, *msg, *out); });
    }
    {
        auto* tx = chan->add_subcommand("transmit", "add sampled noise to the codeword");
        auto model = std::make_shared<std::string>();
        auto seed = std::make_shared<uint64_t>(1);
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        tx->add_option("--model", *model, "model file")->required();
        tx->add_option("--seed", *seed, "noise seed");
        tx->add_option("--in", *in, "input transcript")->required();
        tx->add_option("--out", *out, "output transcript")->required();
        tx->callback([=, &rc] { rc = run_channel_transmit(*model, *seed, *in, *out); });
    }
    {
        auto* dec = chan->add_subcommand("decode", "recover the message from the received word");
        auto model = std::make_shared<std::string>();
        auto sets = std::make_shared<std::string>();
        auto kernel = std::make_shared<std::string>();
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        dec->add_option("--model", *model, "model file")->required();
        dec->add_option("--sets", *sets, "selection sets file")->required();
        dec->add_option("--kernel", *kernel, "mixing matrix, row-major comma separated");
        dec->add_option("--in", *in, "input transcript")->required();
        dec->add_option("--out", *out, "decoded message symbols")->required();
        dec->callback([=, &rc] { rc = run_channel_decode(*model, *sets, *kernel, *in, *out); });
    }

    {
        auto* ex = app.add_subcommand("experiment", "preprocess, probe round trips, estimate entropy");
        auto a = std::make_shared<CommonArgs>();
        auto trials = std::make_shared<size_t>(100);
        auto out = std::make_shared<std::string>();
        add_common(ex, a);
        ex->add_option("--trials", *trials, "round-trip trials");
        ex->add_option("--out", *out, "output csv")->required();
        ex->callback([=, &rc] { rc = run_experiment(*a, *trials, *out); });
    }
    {
        auto* sm = app.add_subcommand("sample", "sample a symbol sequence from a model");
        auto model = std::make_shared<std::string>();
        auto n = std::make_shared<size_t>(0);
        auto seed = std::make_shared<uint64_t>(1);
        auto out = std::make_shared<std::string>();
        sm->add_option("--model", *model, "model file")->required();
        sm->add_option("--samples", *n, "number of symbols")->required();
        sm->add_option("--seed", *seed, "rng seed");
        sm->add_option("--out", *out, "output symbols")->required();
        sm->callback([=, &rc] { rc = run_sample(*model, *n, *seed, *out); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
