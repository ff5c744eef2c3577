#include "modforge/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "modforge/checkpoint.hpp"
#include "modforge/probe.hpp"
#include "modforge/rng.hpp"

namespace modforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

// Population standard deviation (the seed list is the whole population).
MeanStd mean_std(const std::vector<double>& v) {
    MeanStd out;
    if (v.empty()) return out;
    for (double x : v) out.mean += x;
    out.mean /= static_cast<double>(v.size());
    for (double x : v) out.std += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(out.std / static_cast<double>(v.size()));
    return out;
}

json mean_std_json(const std::vector<double>& v) {
    const MeanStd ms = mean_std(v);
    return {{"mean", ms.mean}, {"std", ms.std}};
}

// --- per-epoch CSV ------------------------------------------------------------

class CsvLogger {
  public:
    CsvLogger(const std::string& path, const std::vector<std::string>& modalities, bool with_d)
        : out_(path), modalities_(modalities), with_d_(with_d) {
        if (!out_) throw IoError("cannot open '" + path + "' for writing");
        out_ << "epoch,split,loss,acc";
        for (const char* metric : {"acc", "s", "r", "tau", "kappa"})
            for (const auto& m : modalities_) out_ << "," << metric << "_" << m;
        if (with_d_)
            for (const auto& m : modalities_) out_ << ",d_" << m;
        out_ << "\n";
    }

    void row(std::size_t epoch, const std::string& split, double loss, double acc,
             const std::vector<double>& acc_m, const std::vector<double>& s,
             const std::vector<double>& r, const std::vector<double>& tau,
             const std::vector<double>& kappa, const std::vector<double>& d) {
        out_ << epoch << "," << split << "," << fmt(loss) << "," << fmt(acc);
        auto block = [&](const std::vector<double>& v) {
            for (std::size_t i = 0; i < modalities_.size(); ++i)
                out_ << "," << (i < v.size() ? fmt(v[i]) : "");
        };
        block(acc_m);
        block(s);
        block(r);
        block(tau);
        block(kappa);
        if (with_d_) block(d);
        out_ << "\n";
        out_.flush();  // partial results survive an abort
    }

  private:
    std::ofstream out_;
    std::vector<std::string> modalities_;
    bool with_d_;
};

}  // namespace

// --- run ------------------------------------------------------------------------

std::string run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset ds = cfg.dataset.load();
    const Splits splits = make_splits(ds, cfg.splits, cfg.split_seed);
    const std::vector<ModalitySpec> specs = cfg.model.resolve(ds);
    const FusionSpec fusion = cfg.model.fusion_spec();

    fs::create_directories(cfg.output_dir);
    const std::string manifest_path = (fs::path(cfg.output_dir) / "manifest.json").string();

    std::vector<std::string> modality_names;
    for (const auto& m : ds.modalities) modality_names.push_back(m.name);

    json manifest;
    manifest["tool"] = kToolVersion;
    manifest["timestamp"] = iso_timestamp();
    manifest["config"] = json::parse(experiment_config_to_json(cfg));
    manifest["dataset"] = {{"descriptor", cfg.dataset.describe()},
                           {"num_samples", ds.num_samples},
                           {"num_classes", ds.num_classes}};
    manifest["dataset"]["modalities"] = json::array();
    for (const auto& m : ds.modalities)
        manifest["dataset"]["modalities"].push_back({{"name", m.name}, {"dim", m.dim}});
    manifest["model"] = {{"fusion", fusion_kind_name(fusion.kind)},
                         {"num_classes", ds.num_classes}};
    manifest["model"]["modalities"] = json::array();
    for (const auto& s : specs)
        manifest["model"]["modalities"].push_back(
            {{"name", s.name}, {"input_dim", s.input_dim}, {"encoder_hidden", s.encoder_hidden}});
    if (fusion.kind == FusionKind::EarlyMaxout) {
        manifest["model"]["fusion_hidden_dim"] = fusion.fusion_hidden_dim;
        manifest["model"]["maxout_pieces"] = fusion.maxout_pieces;
    }
    manifest["method"] = train_method_name(cfg.method);
    manifest["alpha"] =
        cfg.method == TrainMethod::JointTrain ? json(nullptr) : json(cfg.alpha);
    manifest["seeds"] = cfg.seeds;
    manifest["per_seed"] = json::array();
    manifest["complete"] = false;

    auto write_manifest = [&]() {
        std::ofstream out(manifest_path);
        if (!out) throw IoError("cannot open '" + manifest_path + "' for writing");
        out << manifest.dump(2) << "\n";
    };
    write_manifest();

    std::vector<double> agg_acc;
    std::vector<std::vector<double>> agg_acc_m(modality_names.size()),
        agg_d(modality_names.size()), agg_d_raw(modality_names.size()),
        agg_concept(modality_names.size());

    for (const std::uint64_t seed : cfg.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::string seed_dir =
            (fs::path(cfg.output_dir) / ("seed" + std::to_string(seed))).string();
        fs::create_directories(seed_dir);

        MultiModalModel model =
            MultiModalModel::build(specs, fusion, ds.num_classes, mix_seed(seed, "model-init"));

        // Mono-modal concepts, same training environment as the paired run.
        ConceptTrainConfig ccfg;
        ccfg.epochs = cfg.epochs;
        ccfg.batch_size = cfg.batch_size;
        ccfg.sgd = cfg.sgd;
        ccfg.seed = seed;
        std::vector<ConceptModel> concepts;
        for (std::size_t mi = 0; mi < modality_names.size(); ++mi) {
            concepts.push_back(fusion.kind == FusionKind::LateSum
                                   ? train_concept_late(model, mi, ds, splits, ccfg)
                                   : train_concept_early(model, mi, ds, splits,
                                                         /*random_padding=*/false, ccfg));
        }

        CsvLogger csv((fs::path(seed_dir) / "run.csv").string(), modality_names,
                      /*with_d=*/cfg.probe_every > 0);

        TrainOptions topts;
        topts.method = cfg.method;
        topts.alpha = cfg.alpha;
        topts.epochs = cfg.epochs;
        topts.batch_size = cfg.batch_size;
        topts.sgd = cfg.sgd;
        topts.seed = seed;
        topts.probe_every = cfg.probe_every;

        ProbeHook hook;
        if (cfg.probe_every > 0) {
            hook = [&](const MultiModalModel& m, std::size_t) {
                std::vector<double> d;
                for (const auto& res : probe_pipeline(m, concepts, ds, splits, cfg.lambda))
                    d.push_back(res.d);
                return d;
            };
        }

        const TrainResult result =
            train(model, ds, splits, topts, hook, [&](const EpochMetrics& em) {
                csv.row(em.epoch, "train", em.train_loss, em.train_acc, em.train_acc_m, em.mean_s,
                        em.mean_r, em.mean_tau, em.mean_kappa, {});
                csv.row(em.epoch, "val", em.val_loss, em.val_acc, em.val_acc_m, em.val_s, {}, {},
                        {}, em.d);
            });

        const std::vector<ProbeResult> probes = probe_pipeline(model, concepts, ds, splits, cfg.lambda);

        json seed_entry;
        seed_entry["seed"] = seed;
        seed_entry["csv"] = ("seed" + std::to_string(seed)) + "/run.csv";
        if (cfg.save_checkpoints) {
            const std::string ckpt = (fs::path(seed_dir) / "model.mmf").string();
            save_checkpoint(model.params(), ckpt);
            seed_entry["checkpoint"] = ("seed" + std::to_string(seed)) + "/model.mmf";
        }

        json final_block;
        if (!result.history.empty()) {
            const EpochMetrics& last = result.history.back();
            final_block["acc"] = last.val_acc;
            final_block["loss"] = last.val_loss;
            json accs = json::object(), ss = json::object();
            for (std::size_t mi = 0; mi < modality_names.size(); ++mi) {
                accs[modality_names[mi]] = last.val_acc_m[mi];
                ss[modality_names[mi]] = last.val_s[mi];
            }
            final_block["acc_m"] = accs;
            final_block["s"] = ss;
            agg_acc.push_back(last.val_acc);
            for (std::size_t mi = 0; mi < modality_names.size(); ++mi)
                agg_acc_m[mi].push_back(last.val_acc_m[mi]);
        }
        seed_entry["final"] = final_block;

        json concept_block = json::object();
        for (std::size_t mi = 0; mi < concepts.size(); ++mi) {
            const ConceptModel& c = concepts[mi];
            const ConceptEval ev = concept_eval(c, ds, splits.val);
            const std::string file =
                "concept_" + c.modality + "_" + concept_context_name(c.context) + ".mmf";
            if (cfg.save_checkpoints)
                save_checkpoint(c.net.params(), (fs::path(seed_dir) / file).string());
            json entry = {{"context", concept_context_name(c.context)},
                          {"accuracy", ev.accuracy}};
            if (cfg.save_checkpoints)
                entry["checkpoint"] = ("seed" + std::to_string(seed)) + "/" + file;
            concept_block[c.modality] = entry;
            agg_concept[mi].push_back(ev.accuracy);
        }
        seed_entry["concepts"] = concept_block;

        json probe_block = json::object();
        for (std::size_t mi = 0; mi < probes.size(); ++mi) {
            const ProbeResult& p = probes[mi];
            probe_block[p.modality] = {{"d", p.d},
                                       {"d_raw", p.d_raw},
                                       {"lambda", p.lambda},
                                       {"n_fit", p.n_fit},
                                       {"n_eval", p.n_eval}};
            agg_d[mi].push_back(p.d);
            agg_d_raw[mi].push_back(p.d_raw);
        }
        seed_entry["probe"] = probe_block;

        const auto t1 = std::chrono::steady_clock::now();
        seed_entry["wall_time_s"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0;

        manifest["per_seed"].push_back(seed_entry);
        write_manifest();  // flush partial results after each seed
    }

    json agg;
    agg["acc"] = mean_std_json(agg_acc);
    json am = json::object(), ad = json::object(), adr = json::object(), ac = json::object();
    for (std::size_t mi = 0; mi < modality_names.size(); ++mi) {
        am[modality_names[mi]] = mean_std_json(agg_acc_m[mi]);
        ad[modality_names[mi]] = mean_std_json(agg_d[mi]);
        adr[modality_names[mi]] = mean_std_json(agg_d_raw[mi]);
        ac[modality_names[mi]] = mean_std_json(agg_concept[mi]);
    }
    agg["acc_m"] = am;
    agg["d"] = ad;
    agg["d_raw"] = adr;
    agg["concept_acc"] = ac;
    manifest["aggregate"] = agg;
    manifest["complete"] = true;
    write_manifest();
    return manifest_path;
}

// --- compare -----------------------------------------------------------------------

namespace {

json read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw FormatError("'" + path + "' is not valid JSON");
    for (const char* key : {"dataset", "model", "method", "aggregate", "seeds"})
        if (!j.contains(key))
            throw FormatError("'" + path + "' is not a run manifest (missing '" + key + "')");
    return j;
}

}  // namespace

std::string compare_manifests(const std::vector<std::string>& manifest_paths,
                              const std::string& out_csv) {
    if (manifest_paths.empty()) throw ConfigError("compare: no manifests given");
    std::vector<json> manifests;
    for (const auto& p : manifest_paths) manifests.push_back(read_manifest(p));

    const json& ref = manifests.front();
    for (std::size_t i = 1; i < manifests.size(); ++i) {
        for (const char* field : {"num_samples", "num_classes", "modalities"}) {
            if (manifests[i]["dataset"][field] != ref["dataset"][field])
                throw ConfigError("compare: manifests disagree on dataset." + std::string(field) +
                                  " ('" + manifest_paths[i] + "' vs '" + manifest_paths[0] + "')");
        }
        if (manifests[i]["model"]["modalities"] != ref["model"]["modalities"])
            throw ConfigError("compare: manifests disagree on model.modalities ('" +
                              manifest_paths[i] + "' vs '" + manifest_paths[0] + "')");
    }

    std::vector<std::string> modality_names;
    for (const auto& m : ref["dataset"]["modalities"]) modality_names.push_back(m["name"]);

    std::ostringstream table;
    table << "method,fusion,alpha,seeds,acc_mean,acc_std";
    for (const auto& m : modality_names) table << ",acc_" << m << "_mean,acc_" << m << "_std";
    for (const auto& m : modality_names) table << ",d_" << m << "_mean,d_" << m << "_std";
    for (const auto& m : modality_names)
        table << ",concept_acc_" << m << "_mean,concept_acc_" << m << "_std";
    table << ",best\n";

    std::size_t best_row = 0;
    double best_acc = -1.0;
    for (std::size_t i = 0; i < manifests.size(); ++i) {
        const double acc = manifests[i]["aggregate"]["acc"]["mean"].get<double>();
        if (acc > best_acc) {
            best_acc = acc;
            best_row = i;
        }
    }

    for (std::size_t i = 0; i < manifests.size(); ++i) {
        const json& m = manifests[i];
        const json& agg = m["aggregate"];
        table << m["method"].get<std::string>() << ","
              << m["model"]["fusion"].get<std::string>() << ",";
        if (m.contains("alpha") && !m["alpha"].is_null()) table << fmt(m["alpha"].get<double>());
        table << "," << m["seeds"].size() << "," << fmt(agg["acc"]["mean"].get<double>()) << ","
              << fmt(agg["acc"]["std"].get<double>());
        auto block = [&](const char* key) {
            for (const auto& name : modality_names) {
                const json& cell = agg[key][name];
                table << "," << fmt(cell["mean"].get<double>()) << ","
                      << fmt(cell["std"].get<double>());
            }
        };
        block("acc_m");
        block("d");
        block("concept_acc");
        table << "," << (manifests.size() > 1 && i == best_row ? "*" : "") << "\n";
    }

    const std::string text = table.str();
    if (!out_csv.empty()) {
        std::ofstream out(out_csv);
        if (!out) throw IoError("cannot open '" + out_csv + "' for writing");
        out << text;
    }
    return text;
}

// --- plot --------------------------------------------------------------------------

namespace {

struct Series {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points;  // (epoch, value)
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

void emit_panel(std::ostringstream& svg, double x0, double y0, double w, double h,
                const std::string& title, const std::vector<Series>& series, double max_epoch) {
    const double plot_x = x0 + 50, plot_y = y0 + 30, plot_w = w - 190, plot_h = h - 70;
    svg << "<text x=\"" << x0 + w / 2 << "\" y=\"" << y0 + 16
        << "\" text-anchor=\"middle\" font-size=\"14\" font-weight=\"bold\">" << title
        << "</text>\n";
    svg << "<rect x=\"" << plot_x << "\" y=\"" << plot_y << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";

    auto sx = [&](double e) { return plot_x + (max_epoch > 0 ? e / max_epoch : 0.5) * plot_w; };
    auto sy = [&](double v) { return plot_y + (1.0 - v) * plot_h; };

    for (int i = 0; i <= 4; ++i) {  // y grid at 0, .25, .5, .75, 1
        const double v = i * 0.25;
        svg << "<line x1=\"" << plot_x << "\" y1=\"" << sy(v) << "\" x2=\"" << plot_x + plot_w
            << "\" y2=\"" << sy(v) << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << plot_x - 6 << "\" y=\"" << sy(v) + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << v << "</text>\n";
    }
    const int xticks = std::min(8, static_cast<int>(max_epoch) + 1);
    for (int i = 0; i < xticks; ++i) {
        const double e = xticks > 1 ? max_epoch * i / (xticks - 1) : 0.0;
        svg << "<text x=\"" << sx(e) << "\" y=\"" << plot_y + plot_h + 16
            << "\" text-anchor=\"middle\" font-size=\"11\">" << static_cast<int>(e + 0.5)
            << "</text>\n";
    }
    svg << "<text x=\"" << plot_x + plot_w / 2 << "\" y=\"" << plot_y + plot_h + 34
        << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";

    double ly = plot_y + 8;
    for (const Series& s : series) {
        svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            if (i) svg << " ";
            svg << sx(s.points[i].first) << "," << sy(s.points[i].second);
        }
        svg << "\"/>\n";
        svg << "<line x1=\"" << plot_x + plot_w + 10 << "\" y1=\"" << ly << "\" x2=\""
            << plot_x + plot_w + 30 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << plot_x + plot_w + 36 << "\" y=\"" << ly + 4
            << "\" font-size=\"11\">" << s.label << "</text>\n";
        ly += 16;
    }
}

}  // namespace

void plot_run_csv(const std::string& csv_path, const std::string& svg_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open '" + csv_path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("'" + csv_path + "' is empty");
    const std::vector<std::string> header = split_csv_line(line);

    auto col = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        return -1;
    };
    const std::ptrdiff_t c_epoch = col("epoch"), c_split = col("split"), c_acc = col("acc");
    if (c_epoch < 0 || c_split < 0 || c_acc < 0)
        throw ConfigError("'" + csv_path + "' is missing required columns epoch/split/acc");

    std::vector<std::pair<std::string, std::size_t>> acc_cols, d_cols;  // (modality, column)
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i].rfind("acc_", 0) == 0) acc_cols.emplace_back(header[i].substr(4), i);
        if (header[i].rfind("d_", 0) == 0) d_cols.emplace_back(header[i].substr(2), i);
    }

    std::vector<Series> acc_series, d_series;
    acc_series.push_back({"Acc", kPalette[0], {}});
    for (std::size_t i = 0; i < acc_cols.size(); ++i)
        acc_series.push_back({"Acc_" + acc_cols[i].first, kPalette[(i + 1) % 8], {}});
    for (std::size_t i = 0; i < d_cols.size(); ++i)
        d_series.push_back({"d_" + d_cols[i].first, kPalette[(i + 1) % 8], {}});

    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() < header.size()) continue;
        ++rows;
        if (f[static_cast<std::size_t>(c_split)] != "val") continue;
        const double epoch = std::stod(f[static_cast<std::size_t>(c_epoch)]);
        acc_series[0].points.emplace_back(epoch, std::stod(f[static_cast<std::size_t>(c_acc)]));
        for (std::size_t i = 0; i < acc_cols.size(); ++i) {
            const std::string& cell = f[acc_cols[i].second];
            if (!cell.empty()) acc_series[i + 1].points.emplace_back(epoch, std::stod(cell));
        }
        for (std::size_t i = 0; i < d_cols.size(); ++i) {
            const std::string& cell = f[d_cols[i].second];
            if (!cell.empty()) d_series[i].points.emplace_back(epoch, std::stod(cell));
        }
    }
    if (rows == 0) throw ConfigError("'" + csv_path + "' has no data rows");
    if (acc_series[0].points.empty())
        throw ConfigError("'" + csv_path + "' has no validation rows to plot");

    bool any_d = false;
    for (const Series& s : d_series) any_d |= !s.points.empty();
    if (!any_d) d_series.clear();

    double max_epoch = 0.0;
    for (const auto& p : acc_series[0].points) max_epoch = std::max(max_epoch, p.first);

    const double width = 900, panel_h = 260;
    const double height = d_series.empty() ? panel_h : 2 * panel_h;
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    emit_panel(svg, 0, 0, width, panel_h, "validation accuracy", acc_series, max_epoch);
    if (!d_series.empty())
        emit_panel(svg, 0, panel_h, width, panel_h, "competition strength", d_series, max_epoch);
    svg << "</svg>\n";

    std::ofstream out(svg_path);
    if (!out) throw IoError("cannot open '" + svg_path + "' for writing");
    out << svg.str();
}

}  // namespace modforge
