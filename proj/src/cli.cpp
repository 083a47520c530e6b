#include "smforge/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "smforge/baselines.hpp"
#include "smforge/experiment.hpp"
#include "smforge/io.hpp"
#include "smforge/metrics.hpp"
#include "smforge/recon.hpp"

namespace smforge::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Invariant failure detected by a command (reported with exit status 1).
class CheckFailed : public Error {
public:
    using Error::Error;
};

struct Context {
    std::string command;
    std::vector<std::string> replay_args;  // command-specific arguments, in order
    json config_json;
    experiment::ExperimentConfig cfg;
    fs::path out;
    json inputs = json::array();
    json outputs = json::array();
    json extra = json::object();
    std::ostream* log = nullptr;

    void input(const fs::path& p) {
        inputs.push_back({{"path", p.string()}, {"crc32", io::crc32(io::read_file(p))}});
    }

    void write(const std::string& name, std::string_view bytes) {
        io::atomic_write(out / name, bytes);
        outputs.push_back({{"path", name}, {"crc32", io::crc32(bytes)}, {"bytes", bytes.size()}});
    }

    void write_sm(const std::string& name, const SystemMatrix& sm) { write(name, io::encode_sm(sm)); }

    void finish(double seconds) const {
        json m = {{"format_version", io::kFormatVersion},
                  {"command", command},
                  {"args", replay_args},
                  {"config", config_json},
                  {"inputs", inputs},
                  {"outputs", outputs}};
        m.update(extra);
        io::atomic_write(out / "manifest.json", m.dump(2) + "\n");
        io::atomic_write(out / "timing.json", json{{"wall_seconds", seconds}}.dump() + "\n");
    }
};

std::string jsonl(const std::vector<json>& lines) {
    std::string s;
    for (const auto& l : lines) s += l.dump() + "\n";
    return s;
}

std::string sm_name(const std::string& split, int i) {
    std::ostringstream ss;
    ss << split << '_' << std::setw(2) << std::setfill('0') << i << ".bin";
    return ss.str();
}

/// Payload CRCs of the matrices listed under `splits` in a dataset manifest.
std::vector<std::uint32_t> split_crcs(const fs::path& dir, const json& manifest,
                                      const std::vector<std::string>& splits) {
    std::vector<std::uint32_t> crcs;
    for (const auto& split : splits) {
        for (const auto& f : manifest.at("splits").at(split)) {
            crcs.push_back(io::sm_payload_crc(dir / f.get<std::string>()));
        }
    }
    return crcs;
}

json load_dataset_manifest(const fs::path& dir) {
    const json m = json::parse(io::read_file(dir / "manifest.json"));
    if (!m.contains("splits")) throw FormatError("'" + dir.string() + "' is not a dataset directory");
    for (const auto& o : m.at("outputs")) {
        const std::string bytes = io::read_file(dir / o.at("path").get<std::string>());
        if (io::crc32(bytes) != o.at("crc32").get<std::uint32_t>()) {
            throw FormatError("checksum mismatch for '" + o.at("path").get<std::string>() + "'");
        }
    }
    std::map<std::string, std::string> owner;
    for (const auto& [split, files] : m.at("splits").items()) {
        for (const auto& f : files) {
            const auto [it, fresh] = owner.emplace(f.get<std::string>(), split);
            if (!fresh) {
                throw CheckFailed("dataset file '" + it->first + "' appears in splits '" +
                                  it->second + "' and '" + split + "'");
            }
        }
    }
    const auto tr = split_crcs(dir, m, {"train", "val"});
    const auto te = split_crcs(dir, m, {"test"});
    for (auto c : te) {
        if (std::find(tr.begin(), tr.end(), c) != tr.end()) {
            throw CheckFailed("a test matrix duplicates a training or validation matrix");
        }
    }
    return m;
}

std::vector<SystemMatrix> load_split(const fs::path& dir, const json& manifest,
                                     const std::string& split) {
    std::vector<SystemMatrix> v;
    for (const auto& f : manifest.at("splits").at(split)) v.push_back(io::load_sm(dir / f.get<std::string>()));
    return v;
}

// ---------------------------------------------------------------- commands

int cmd_simulate(Context& ctx, bool dataset) {
    const auto& cfg = ctx.cfg;
    const json sim_json = experiment::sim_to_json(cfg.sim);
    ctx.extra["sim_config_hash"] = std::to_string(experiment::config_hash(sim_json));
    if (!dataset) {
        SystemMatrix sm = sim::simulate_sm(cfg.sim);
        if (cfg.dataset.snr_db) sm = sim::add_noise(sm, *cfg.dataset.snr_db, cfg.seed);
        ctx.write_sm("sm.bin", sm);
        *ctx.log << "simulated " << sm.rows() << " x " << sm.cols() << " system matrix\n";
        return kExitOk;
    }
    const experiment::SimDataset ds = experiment::generate_dataset(cfg.sim, cfg.dataset, cfg.seed);
    json splits = {{"train", json::array()}, {"val", json::array()}, {"test", json::array()}};
    const auto emit = [&](const std::string& split, const std::vector<SystemMatrix>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string name = sm_name(split, static_cast<int>(i));
            ctx.write_sm(name, v[i]);
            splits[split].push_back(name);
        }
    };
    emit("train", ds.train);
    emit("val", ds.val);
    emit("test", ds.test);
    json per = json::array();
    for (const auto& c : ds.configs) {
        per.push_back({{"gradient", c.gradient_x}, {"particle_diameter", c.particle_diameter}});
    }
    ctx.extra["splits"] = splits;
    ctx.extra["scales"] = {1};
    ctx.extra["matrix_params"] = per;
    *ctx.log << "simulated dataset: " << ds.train.size() << " train, " << ds.val.size() << " val, "
             << ds.test.size() << " test\n";
    return kExitOk;
}

int cmd_downsample(Context& ctx, const fs::path& in, int scale) {
    ctx.input(in);
    const SystemMatrix lr = downsample(io::load_sm(in), ScaleFactor(scale));
    ctx.write_sm("sm_lr.bin", lr);
    *ctx.log << "downsampled to " << lr.grid().nx << " x " << lr.grid().ny << "\n";
    return kExitOk;
}

int cmd_train(Context& ctx, const fs::path& data_dir) {
    auto& cfg = ctx.cfg;
    const json manifest = load_dataset_manifest(data_dir);
    ctx.input(data_dir / "manifest.json");
    const auto train_sms = load_split(data_dir, manifest, "train");
    const auto val_sms = load_split(data_dir, manifest, "val");
    if (cfg.model.rim_input != cfg.train.rim_enabled) {
        throw ConfigError("model.rim_input and train.rim_enabled must agree");
    }
    const train::Dataset data = experiment::training_set(train_sms, val_sms,
                                                         ScaleFactor(cfg.model.scale), cfg.model.rim_input);
    io::Checkpoint ck;
    ck.model = cfg.model;
    ck.train = cfg.train.to_json();
    ck.seed = cfg.seed;
    ck.training_inputs = split_crcs(data_dir, manifest, {"train", "val"});

    train::TrainReport report;
    try {
        report = train::train(cfg.model, cfg.train, data, [&](int it, const model::ModelParams& p) {
            ck.iteration = it;
            ck.params = p;
            ctx.write("checkpoint_" + std::to_string(it) + ".bin", io::encode_checkpoint(ck));
        });
    } catch (const train::TrainingDiverged& e) {
        ck.iteration = e.iteration;
        ck.params = e.last_good;
        ctx.write("checkpoint_last_good.bin", io::encode_checkpoint(ck));
        throw;
    }
    ck.iteration = cfg.train.iterations;
    ck.params = report.params;
    ctx.write("checkpoint.bin", io::encode_checkpoint(ck));
    ctx.write("loss_curve.csv", io::loss_curve_csv(report));
    std::vector<json> lines;
    lines.push_back(metrics::MetricReport{"train_loss_final", report.train_loss.back(), {}}.to_json());
    if (!report.val_nrmse.empty()) {
        lines.push_back(metrics::MetricReport{"val_nrmse_final", report.val_nrmse.back(), {}}.to_json());
    }
    lines.push_back({{"name", "init_fingerprint"}, {"value", std::to_string(report.init_fingerprint)}});
    lines.push_back({{"name", "batch_order_hash"}, {"value", std::to_string(report.batch_order_hash)}});
    ctx.write("metrics.jsonl", jsonl(lines));
    *ctx.log << "trained " << cfg.train.iterations << " iterations, final loss "
             << report.train_loss.back() << "\n";
    return kExitOk;
}

int cmd_recover(Context& ctx, const fs::path& checkpoint, const fs::path& in) {
    ctx.input(checkpoint);
    ctx.input(in);
    const io::Checkpoint ck = io::load_checkpoint(checkpoint);
    const SystemMatrix lr = io::load_sm(in);
    const SystemMatrix hr = model::recover(ck.params, ck.model, lr);
    ctx.write_sm("sm_recovered.bin", hr);
    ctx.extra["training_inputs"] = ck.training_inputs;
    *ctx.log << "recovered " << hr.rows() << " rows at " << hr.grid().nx << " x " << hr.grid().ny << "\n";
    return kExitOk;
}

int cmd_baseline(Context& ctx, const fs::path& in, int scale, const std::string& method) {
    ctx.input(in);
    baselines::Method m;
    if (method == "bicubic") {
        m = baselines::Method::bicubic;
    } else if (method == "strided") {
        m = baselines::Method::strided;
    } else if (method == "cs") {
        m = baselines::Method::cs;
    } else {
        throw ConfigError("unknown baseline method '" + method + "'");
    }
    const SystemMatrix hr = baselines::recover_matrix(io::load_sm(in), ScaleFactor(scale), m, ctx.cfg.cs);
    ctx.write_sm("sm_" + method + ".bin", hr);
    return kExitOk;
}

int cmd_reconstruct(Context& ctx, const fs::path& sm_path, const std::string& gt_path,
                    const std::string& shape, recon::PhantomParams pp, bool centre) {
    ctx.input(sm_path);
    const SystemMatrix sm = io::load_sm(sm_path);
    const SystemMatrix gt = gt_path.empty() ? sm : io::load_sm(gt_path);
    if (!gt_path.empty()) ctx.input(gt_path);
    const recon::PhantomShape ps = recon::parse_phantom_shape(shape);
    if (centre) {
        pp.x = gt.grid().nx / 2;
        pp.y = gt.grid().ny / 2;
        if (ps == recon::PhantomShape::two_point) pp.x -= pp.separation / 2;
        if (ps == recon::PhantomShape::letter_E) {
            pp.x = gt.grid().nx / 5;
            pp.y = gt.grid().ny / 5;
        }
    }
    const sim::Phantom phantom = recon::make_phantom(gt.grid(), ps, pp);
    const recon::PipelineReport r = recon::evaluate_pipeline(gt, sm, phantom, ctx.cfg.recon);
    ctx.write("phantom.pgm", io::encode_pgm(phantom.concentration));
    ctx.write("recon.pgm", io::encode_pgm(r.image_recovered.concentration));
    ctx.write("recon.csv", io::encode_csv(r.image_recovered.concentration));
    std::vector<json> lines;
    auto rec = r.psnr_recovered;
    rec.name = "psnr";
    lines.push_back(rec.to_json());
    if (!gt_path.empty()) {
        ctx.write("recon_reference.pgm", io::encode_pgm(r.image_reference.concentration));
        ctx.write("recon_reference.csv", io::encode_csv(r.image_reference.concentration));
        auto ref = r.psnr_reference;
        ref.name = "psnr_reference";
        lines.push_back(ref.to_json());
        lines.push_back(metrics::MetricReport{"psnr_gap", r.gap, {}}.to_json());
    }
    ctx.write("metrics.jsonl", jsonl(lines));
    *ctx.log << "pSNR " << r.psnr_recovered.value << " dB\n";
    return kExitOk;
}

int cmd_evaluate(Context& ctx, const fs::path& pred_path, const fs::path& gt_path,
                 std::vector<int> rows) {
    ctx.input(pred_path);
    ctx.input(gt_path);
    const fs::path pred_manifest = pred_path.parent_path() / "manifest.json";
    if (fs::exists(pred_manifest)) {
        const json m = json::parse(io::read_file(pred_manifest));
        if (m.contains("training_inputs")) {
            const auto used = m.at("training_inputs").get<std::vector<std::uint32_t>>();
            if (std::find(used.begin(), used.end(), io::sm_payload_crc(gt_path)) != used.end()) {
                throw CheckFailed("ground truth '" + gt_path.string() +
                                  "' was used to train the model that produced the prediction");
            }
        }
    }
    const SystemMatrix pred = io::load_sm(pred_path);
    const SystemMatrix gt = io::load_sm(gt_path);
    metrics::MetricReport whole = metrics::nrmse(pred, gt);
    std::ostringstream csv;
    csv << std::setprecision(10) << "index,freq_hz,channel,nrmse\n";
    for (int k = 0; k < gt.rows(); ++k) {
        const auto& f = gt.freqs()[static_cast<std::size_t>(k)];
        csv << k << ',' << f.freq_hz << ',' << (f.channel == Channel::x ? "x" : "y") << ','
            << (*whole.per_row)[static_cast<std::size_t>(k)] << '\n';
    }
    ctx.write("per_frequency_nrmse.csv", csv.str());
    if (rows.empty()) {
        for (int k : {0, gt.rows() / 4, gt.rows() / 2, 3 * gt.rows() / 4}) {
            if (k < gt.rows() && std::find(rows.begin(), rows.end(), k) == rows.end()) rows.push_back(k);
        }
    }
    for (int k : rows) {
        const RMatrix err = (sm_row_to_image(pred, k).values - sm_row_to_image(gt, k).values).cwiseAbs();
        ctx.write("error_map_" + std::to_string(k) + ".pgm", io::encode_pgm(err));
        ctx.write("error_map_" + std::to_string(k) + ".csv", io::encode_csv(err));
    }
    std::vector<json> lines;
    json w = whole.to_json();
    w.erase("per_row");
    lines.push_back(w);
    lines.push_back(metrics::MetricReport{"mean_row_nrmse", metrics::mean_row_nrmse(pred, gt), {}}.to_json());
    ctx.write("metrics.jsonl", jsonl(lines));
    *ctx.log << "nRMSE " << whole.value << "\n";
    return kExitOk;
}

int cmd_gradcheck(Context& ctx, int pairs, int side) {
    const auto table = gradcheck(pairs, side, ctx.cfg.seed);
    std::ostringstream csv;
    csv << std::setprecision(6) << "loss,max_rel_error\n";
    bool ok = true;
    *ctx.log << "loss       max rel err\n";
    for (const auto& r : table) {
        csv << loss::loss_name(r.kind) << ',' << r.max_rel_error << '\n';
        *ctx.log << std::left << std::setw(10) << loss::loss_name(r.kind) << ' ' << r.max_rel_error << "\n";
        ok = ok && r.max_rel_error <= 1e-4;
    }
    ctx.write("gradcheck.csv", csv.str());
    if (!ok) throw CheckFailed("a loss gradient exceeds the 1e-4 relative error bound");
    return kExitOk;
}

std::vector<std::string> strip_common(const std::vector<std::string>& args) {
    static const std::vector<std::string> skip_with_value{"--out", "--config", "--set", "--from-manifest"};
    std::vector<std::string> kept;
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        bool skipped = false;
        for (const auto& s : skip_with_value) {
            if (a == s) {
                ++i;
                if (s == "--set") {
                    while (i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0) ++i;
                }
                skipped = true;
                break;
            }
            if (a.rfind(s + "=", 0) == 0) {
                skipped = true;
                break;
            }
        }
        if (!skipped) kept.push_back(a);
    }
    return kept;
}

}  // namespace

std::vector<GradcheckRow> gradcheck(int pairs, int side, std::uint64_t seed, double epsilon) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    loss::LossConfig cfg;
    std::vector<GradcheckRow> rows;
    const std::vector<loss::LossKind> kinds{loss::LossKind::l1, loss::LossKind::l2, loss::LossKind::ssim,
                                            loss::LossKind::ssim_ad, loss::LossKind::fsc};
    for (auto k : kinds) rows.push_back({k, 0.0});
    for (int p = 0; p < pairs; ++p) {
        RMatrix pred(side, side);
        RMatrix gt(side, side);
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
            pred.data()[i] = u(rng);
            gt.data()[i] = u(rng);
        }
        for (auto& row : rows) {
            const auto fn = [&](const RMatrix& a, const RMatrix& b) {
                return loss::evaluate(row.kind, a, b, cfg).value;
            };
            const RMatrix analytic = loss::evaluate(row.kind, pred, gt, cfg).grad;
            const RMatrix numeric = loss::finite_diff_grad(fn, pred, gt, epsilon);
            row.max_rel_error = std::max(row.max_rel_error, loss::relative_error(analytic, numeric));
        }
    }
    return rows;
}

int run_command(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args = args_in;
    json manifest_config;
    bool replay = false;

    // --from-manifest replaces the command line and configuration with the recorded ones.
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--from-manifest" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--from-manifest=", 0) == 0) path = args[i].substr(16);
        if (path.empty()) continue;
        std::string out_dir;
        for (std::size_t j = 0; j < args.size(); ++j) {
            if (args[j] == "--out" && j + 1 < args.size()) out_dir = args[j + 1];
            if (args[j].rfind("--out=", 0) == 0) out_dir = args[j].substr(6);
        }
        try {
            const json m = json::parse(io::read_file(path));
            std::vector<std::string> rebuilt{m.at("command").get<std::string>()};
            for (const auto& a : m.at("args")) rebuilt.push_back(a.get<std::string>());
            if (!out_dir.empty()) {
                rebuilt.push_back("--out");
                rebuilt.push_back(out_dir);
            }
            for (const auto& in : m.at("inputs")) {
                const std::string p = in.at("path").get<std::string>();
                if (io::crc32(io::read_file(p)) != in.at("crc32").get<std::uint32_t>()) {
                    err << "error: input '" << p << "' changed since the manifest was written\n";
                    return kExitFailure;
                }
            }
            manifest_config = m.at("config");
            args = rebuilt;
            replay = true;
        } catch (const std::exception& e) {
            err << "error: cannot replay manifest '" << path << "': " << e.what() << "\n";
            return kExitFailure;
        }
        break;
    }

    CLI::App app{"smforge: system-matrix recovery experiments"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::string manifest_path;
    const auto common = [&](CLI::App* sc) {
        sc->add_option("--config", config_path, "JSON experiment configuration");
        sc->add_option("--set", overrides, "override a configuration value: key=value")->take_all();
        sc->add_option("--out", out_dir, "output directory")->required();
        sc->add_option("--from-manifest", manifest_path, "re-run the command recorded in a manifest");
    };

    bool dataset = false;
    std::string in_path, data_dir, checkpoint, method, pred_path, gt_path, sm_path, shape = "disk";
    int scale = 4;
    int pairs = 20;
    int side = 16;
    std::vector<int> rows;
    recon::PhantomParams pp;
    bool centre = true;

    auto* sim = app.add_subcommand("simulate", "simulate a system matrix or a split dataset");
    common(sim);
    sim->add_flag("--dataset", dataset, "write train/val/test splits");

    auto* down = app.add_subcommand("downsample", "keep every s-th grid point");
    common(down);
    down->add_option("--in", in_path)->required();
    down->add_option("--scale", scale)->required();

    auto* tr = app.add_subcommand("train", "train the recovery network on a dataset directory");
    common(tr);
    tr->add_option("--data", data_dir)->required();

    auto* rec = app.add_subcommand("recover", "recover a high-res matrix with a checkpoint");
    common(rec);
    rec->add_option("--checkpoint", checkpoint)->required();
    rec->add_option("--in", in_path)->required();

    auto* base = app.add_subcommand("baseline", "recover with a classical baseline");
    common(base);
    base->add_option("--in", in_path)->required();
    base->add_option("--scale", scale)->required();
    base->add_option("--method", method)->required()->check(CLI::IsMember({"bicubic", "strided", "cs"}));

    auto* recn = app.add_subcommand("reconstruct", "reconstruct a phantom image with a matrix");
    common(recn);
    recn->add_option("--sm", sm_path)->required();
    recn->add_option("--gt", gt_path, "ground-truth matrix used to simulate the voltages");
    recn->add_option("--phantom", shape)->check(CLI::IsMember({"point", "two_point", "disk", "letter_E"}));
    auto* ox = recn->add_option("--x", pp.x);
    auto* oy = recn->add_option("--y", pp.y);
    recn->add_option("--radius", pp.radius);
    recn->add_option("--separation", pp.separation);

    auto* ev = app.add_subcommand("evaluate", "nRMSE report and error maps");
    common(ev);
    ev->add_option("--pred", pred_path)->required();
    ev->add_option("--gt", gt_path)->required();
    ev->add_option("--rows", rows, "rows to render as error maps")->delimiter(',');

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
    common(gc);
    gc->add_option("--pairs", pairs);
    gc->add_option("--side", side);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }
    centre = ox->count() == 0 && oy->count() == 0;

    const auto start = std::chrono::steady_clock::now();
    Context ctx;
    ctx.log = &out;
    ctx.command = app.get_subcommands().front()->get_name();
    ctx.replay_args = strip_common(args);
    ctx.out = out_dir;
    try {
        json cfg_json = experiment::ExperimentConfig{}.to_json();
        if (replay) {
            cfg_json = manifest_config;
        } else {
            if (!config_path.empty()) {
                json file = json::parse(io::read_file(config_path));
                experiment::ExperimentConfig::from_json(file);  // rejects unknown keys
                cfg_json.merge_patch(file);
            }
            for (const auto& o : overrides) io::apply_override(cfg_json, o);
        }
        ctx.cfg = experiment::ExperimentConfig::from_json(cfg_json);
        ctx.config_json = ctx.cfg.to_json();
        fs::create_directories(ctx.out);

        int status = kExitOk;
        if (ctx.command == "simulate") status = cmd_simulate(ctx, dataset);
        if (ctx.command == "downsample") status = cmd_downsample(ctx, in_path, scale);
        if (ctx.command == "train") status = cmd_train(ctx, data_dir);
        if (ctx.command == "recover") status = cmd_recover(ctx, checkpoint, in_path);
        if (ctx.command == "baseline") status = cmd_baseline(ctx, in_path, scale, method);
        if (ctx.command == "reconstruct") status = cmd_reconstruct(ctx, sm_path, gt_path, shape, pp, centre);
        if (ctx.command == "evaluate") status = cmd_evaluate(ctx, pred_path, gt_path, rows);
        if (ctx.command == "gradcheck") status = cmd_gradcheck(ctx, pairs, side);
        ctx.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        return status;
    } catch (const CheckFailed& e) {
        err << "check failed: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace smforge::cli
