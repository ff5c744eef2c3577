#include "modforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "binio.hpp"
#include "modforge/rng.hpp"

namespace modforge {

using nlohmann::json;

// --- specs -----------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw ConfigError("synthetic.num_classes must be >= 2");
    if (num_samples < num_classes)
        throw ConfigError("synthetic.num_samples must be >= num_classes");
    if (modalities.empty()) throw ConfigError("synthetic.modalities must be non-empty");
    std::set<std::string> names;
    for (const auto& m : modalities) {
        if (m.name.empty()) throw ConfigError("synthetic.modalities: name must be non-empty");
        if (!names.insert(m.name).second)
            throw ConfigError("synthetic.modalities: duplicate name '" + m.name + "'");
        if (m.dim == 0) throw ConfigError("synthetic.modalities['" + m.name + "'].dim must be >= 1");
        if (!(m.snr >= 0.0)) throw ConfigError("synthetic.modalities['" + m.name + "'].snr must be >= 0");
    }
    if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0))
        throw ConfigError("synthetic.shared_fraction must be in [0, 1]");
}

SyntheticSpec builtin_benchmark(const std::string& name, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.num_samples = 4000;
    spec.shared_fraction = 0.0;
    spec.seed = seed;
    if (name == "balanced") {
        spec.modalities = {{"m1", 20, 1.5}, {"m2", 20, 1.5}};
    } else if (name == "imbalanced") {
        spec.modalities = {{"m1", 20, 3.0}, {"m2", 20, 0.5}};
    } else if (name == "trimodal") {
        spec.modalities = {{"m1", 20, 2.5}, {"m2", 20, 1.0}, {"m3", 20, 0.3}};
    } else {
        throw ConfigError("unknown builtin benchmark '" + name +
                          "' (expected balanced, imbalanced or trimodal)");
    }
    return spec;
}

// --- dataset ---------------------------------------------------------------

std::size_t Dataset::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities.size(); ++i)
        if (modalities[i].name == name) return i;
    throw ConfigError("unknown modality '" + name + "'");
}

void Dataset::validate() const {
    if (labels.size() != num_samples) throw ConfigError("dataset: labels size != num_samples");
    if (num_classes < 1) throw ConfigError("dataset: num_classes must be >= 1");
    std::vector<bool> seen(num_classes, false);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw ConfigError("dataset: label " + std::to_string(y) + " out of range");
        seen[static_cast<std::size_t>(y)] = true;
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        if (!seen[c]) throw ConfigError("dataset: class " + std::to_string(c) + " has no samples");
    for (const auto& m : modalities) {
        if (m.features.size() != num_samples * m.dim)
            throw ConfigError("dataset: modality '" + m.name + "' feature array size mismatch");
    }
}

Dataset generate(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t N = spec.num_samples, K = spec.num_classes;
    const double gamma = spec.shared_fraction;

    Dataset ds;
    ds.num_samples = N;
    ds.num_classes = K;

    // Labels: uniform draws, then patch the first samples so every class
    // appears at least once (dataset invariant).
    Rng label_rng(mix_seed(spec.seed, "labels"));
    ds.labels.resize(N);
    for (auto& y : ds.labels) y = static_cast<int>(label_rng.below(K));
    std::vector<bool> present(K, false);
    for (int y : ds.labels) present[static_cast<std::size_t>(y)] = true;
    std::size_t patch = 0;
    for (std::size_t c = 0; c < K; ++c)
        if (!present[c]) ds.labels[patch++] = static_cast<int>(c);

    // Shared class latents, dimension = smallest modality dim (any fixed
    // choice works; P^m maps them into each modality's space).
    std::size_t d_shared = spec.modalities.front().dim;
    for (const auto& m : spec.modalities) d_shared = std::min(d_shared, m.dim);
    std::vector<double> shared_means(K * d_shared);
    {
        Rng rng(mix_seed(spec.seed, "shared-means"));
        for (double& v : shared_means) v = rng.normal();
    }

    for (std::size_t mi = 0; mi < spec.modalities.size(); ++mi) {
        const auto& mspec = spec.modalities[mi];
        const std::size_t d = mspec.dim;
        DatasetModality mod;
        mod.name = mspec.name;
        mod.dim = d;
        mod.features.resize(N * d);

        std::vector<double> means(K * d);
        {
            Rng rng(mix_seed(spec.seed, "class-means", mi));
            for (double& v : means) v = rng.normal();
        }
        // Fixed random projection P^m of the shared latent, scaled to keep
        // per-coordinate variance at 1 regardless of d_shared.
        std::vector<double> proj(d * d_shared);
        {
            Rng rng(mix_seed(spec.seed, "shared-proj", mi));
            const double scale = 1.0 / std::sqrt(static_cast<double>(d_shared));
            for (double& v : proj) v = scale * rng.normal();
        }
        std::vector<double> shared_in_m(K * d, 0.0);
        for (std::size_t c = 0; c < K; ++c)
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t s = 0; s < d_shared; ++s)
                    acc += proj[j * d_shared + s] * shared_means[c * d_shared + s];
                shared_in_m[c * d + j] = acc;
            }

        Rng noise(mix_seed(spec.seed, "noise", mi));
        for (std::size_t i = 0; i < N; ++i) {
            const auto y = static_cast<std::size_t>(ds.labels[i]);
            for (std::size_t j = 0; j < d; ++j) {
                const double signal =
                    (1.0 - gamma) * means[y * d + j] + gamma * shared_in_m[y * d + j];
                mod.features[i * d + j] = mspec.snr * signal + noise.normal();
            }
        }
        ds.modalities.push_back(std::move(mod));
    }

    json prov;
    prov["kind"] = "synthetic";
    prov["num_classes"] = K;
    prov["num_samples"] = N;
    prov["shared_fraction"] = gamma;
    prov["seed"] = spec.seed;
    prov["modalities"] = json::array();
    for (const auto& m : spec.modalities)
        prov["modalities"].push_back({{"name", m.name}, {"dim", m.dim}, {"snr", m.snr}});
    ds.provenance = prov.dump();
    ds.validate();
    return ds;
}

// --- persistence -------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    if (ds.num_classes > 0x10000)
        throw UsageError("num_classes exceeds the u16 label range of the .mmds format");

    json header;
    header["num_samples"] = ds.num_samples;
    header["num_classes"] = ds.num_classes;
    header["modalities"] = json::array();
    for (const auto& m : ds.modalities)
        header["modalities"].push_back({{"name", m.name}, {"dim", m.dim}});
    header["label_dtype"] = "u16";
    header["feature_dtype"] = "f32";
    if (!ds.provenance.empty()) {
        json prov = json::parse(ds.provenance, nullptr, /*allow_exceptions=*/false);
        header["provenance"] = prov.is_discarded() ? json(ds.provenance) : prov;
    } else {
        header["provenance"] = nullptr;
    }
    const std::string header_text = header.dump();

    detail::BinWriter w(path);
    w.magic("MMDS");
    w.u32(kDatasetVersion);
    w.u64(header_text.size());
    w.str(header_text);
    for (int y : ds.labels) w.u16(static_cast<std::uint16_t>(y));
    for (const auto& m : ds.modalities)
        for (double v : m.features) w.f32(static_cast<float>(v));
    w.close();
}

Dataset load_dataset(const std::string& path) {
    detail::BinReader r(path);
    r.expect_magic("MMDS");
    const std::uint32_t version = r.u32("version");
    if (version != kDatasetVersion) r.fail("unsupported dataset version " + std::to_string(version));
    const std::uint64_t header_len = r.u64("header length");
    if (header_len > (1ull << 30)) r.fail("implausible header length " + std::to_string(header_len));
    const std::string header_text = r.str(static_cast<std::size_t>(header_len), "JSON header");

    json header = json::parse(header_text, nullptr, /*allow_exceptions=*/false);
    if (header.is_discarded() || !header.is_object()) r.fail("header is not valid JSON");
    auto require = [&](const char* key) -> const json& {
        auto it = header.find(key);
        if (it == header.end()) r.fail(std::string("header missing key '") + key + "'");
        return *it;
    };
    const auto& jn = require("num_samples");
    const auto& jk = require("num_classes");
    const auto& jm = require("modalities");
    if (!jn.is_number_unsigned() || !jk.is_number_unsigned() || !jm.is_array() || jm.empty())
        r.fail("header fields num_samples/num_classes/modalities are malformed");
    if (require("label_dtype") != "u16") r.fail("unsupported label_dtype (expected \"u16\")");
    if (require("feature_dtype") != "f32") r.fail("unsupported feature_dtype (expected \"f32\")");

    Dataset ds;
    ds.num_samples = jn.get<std::size_t>();
    ds.num_classes = jk.get<std::size_t>();
    for (const auto& m : jm) {
        if (!m.is_object() || !m.contains("name") || !m.contains("dim") ||
            !m["name"].is_string() || !m["dim"].is_number_unsigned() || m["dim"] == 0)
            r.fail("malformed modality entry in header");
        DatasetModality mod;
        mod.name = m["name"].get<std::string>();
        mod.dim = m["dim"].get<std::size_t>();
        ds.modalities.push_back(std::move(mod));
    }
    if (header.contains("provenance") && !header["provenance"].is_null())
        ds.provenance = header["provenance"].dump();

    ds.labels.resize(ds.num_samples);
    for (auto& y : ds.labels) {
        const std::uint16_t v = r.u16("labels");
        if (v >= ds.num_classes) r.fail("label " + std::to_string(v) + " >= num_classes");
        y = static_cast<int>(v);
    }
    for (auto& m : ds.modalities) {
        m.features.resize(ds.num_samples * m.dim);
        for (double& v : m.features) v = static_cast<double>(r.f32("features"));
    }
    if (!r.at_eof()) r.fail("trailing bytes after feature blocks");

    try {
        ds.validate();
    } catch (const ConfigError& e) {
        r.fail(std::string("inconsistent dataset: ") + e.what());
    }
    return ds;
}

// --- splits -------------------------------------------------------------------

namespace {

// Largest-remainder (Hamilton) allocation of `total` seats across ideal
// shares, honoring per-entry caps. Ties go to the lowest index.
std::vector<std::size_t> hamilton(const std::vector<double>& ideal, std::size_t total,
                                  const std::vector<std::size_t>& cap) {
    const std::size_t n = ideal.size();
    std::vector<std::size_t> out(n);
    std::vector<double> frac(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::min(static_cast<std::size_t>(std::floor(ideal[i] + 1e-9)), cap[i]);
        frac[i] = ideal[i] - static_cast<double>(out[i]);
        assigned += out[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    std::size_t cursor = 0;
    while (assigned < total) {
        const std::size_t i = order[cursor % n];
        if (out[i] < cap[i]) {
            ++out[i];
            ++assigned;
        }
        ++cursor;
        if (cursor > 4 * n * (total + 1)) throw UsageError("split allocation failed to converge");
    }
    return out;
}

}  // namespace

Splits make_splits(const Dataset& ds, const SplitFractions& fr, std::uint64_t seed) {
    const double fracs[4] = {fr.train, fr.val, fr.probe_fit, fr.probe_eval};
    double sum = 0.0;
    for (double f : fracs) {
        if (f < 0.0) throw ConfigError("split fractions must be non-negative");
        sum += f;
    }
    if (sum > 1.0 + 1e-9) throw ConfigError("split fractions sum to " + std::to_string(sum) + " > 1");

    // Group sample indices by class and shuffle each group deterministically.
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.num_samples; ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::size_t active_splits = 0;
    for (double f : fracs)
        if (f > 0.0) ++active_splits;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < active_splits) {
            throw ConfigError("class " + std::to_string(c) + " has only " +
                              std::to_string(by_class[c].size()) + " samples for " +
                              std::to_string(active_splits) + " splits");
        }
        Rng rng(mix_seed(seed, "split-shuffle", c));
        rng.shuffle(by_class[c]);
    }

    // Global split sizes by largest remainder over N·f_j.
    const auto N = static_cast<double>(ds.num_samples);
    std::vector<double> global_ideal(4);
    for (std::size_t j = 0; j < 4; ++j) global_ideal[j] = N * fracs[j];
    const auto total_assigned = static_cast<std::size_t>(std::floor(N * sum + 1e-9));
    std::vector<std::size_t> global_cap(4, ds.num_samples);
    const std::vector<std::size_t> sizes = hamilton(global_ideal, total_assigned, global_cap);

    // Per split: distribute its quota across classes proportionally, capped by
    // what each class still has; consume each class's shuffled list in order.
    std::vector<std::size_t> remaining(ds.num_classes);
    std::vector<std::size_t> cursorc(ds.num_classes, 0);
    for (std::size_t c = 0; c < ds.num_classes; ++c) remaining[c] = by_class[c].size();

    Splits out;
    std::vector<std::size_t>* lists[4] = {&out.train, &out.val, &out.probe_fit, &out.probe_eval};
    for (std::size_t j = 0; j < 4; ++j) {
        std::vector<double> ideal(ds.num_classes);
        for (std::size_t c = 0; c < ds.num_classes; ++c)
            ideal[c] = static_cast<double>(by_class[c].size()) * fracs[j];
        const std::vector<std::size_t> quota = hamilton(ideal, sizes[j], remaining);
        for (std::size_t c = 0; c < ds.num_classes; ++c) {
            for (std::size_t q = 0; q < quota[c]; ++q)
                lists[j]->push_back(by_class[c][cursorc[c]++]);
            remaining[c] -= quota[c];
        }
        std::sort(lists[j]->begin(), lists[j]->end());
    }
    return out;
}

// --- batching -----------------------------------------------------------------

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& split,
                                                   std::size_t batch_size,
                                                   std::uint64_t epoch_seed) {
    if (split.empty()) throw UsageError("make_batches: empty split");
    if (batch_size == 0) throw UsageError("make_batches: batch_size must be >= 1");
    std::vector<std::size_t> order = split;
    Rng rng(epoch_seed);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(i + batch_size, order.size());
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

// --- gathering -------------------------------------------------------------------

Tensor gather_features(const Dataset& ds, std::size_t modality_index,
                       std::span<const std::size_t> idx) {
    if (modality_index >= ds.modalities.size())
        throw UsageError("gather_features: modality index out of range");
    const auto& m = ds.modalities[modality_index];
    std::vector<double> data(idx.size() * m.dim);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= ds.num_samples) throw UsageError("gather_features: sample index out of range");
        std::copy_n(m.features.begin() + static_cast<std::ptrdiff_t>(idx[r] * m.dim), m.dim,
                    data.begin() + static_cast<std::ptrdiff_t>(r * m.dim));
    }
    return Tensor::constant(Shape{idx.size(), m.dim}, std::move(data));
}

std::vector<Tensor> gather_all_features(const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<Tensor> out;
    out.reserve(ds.modalities.size());
    for (std::size_t mi = 0; mi < ds.modalities.size(); ++mi)
        out.push_back(gather_features(ds, mi, idx));
    return out;
}

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<int> out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= ds.num_samples) throw UsageError("gather_labels: sample index out of range");
        out[r] = ds.labels[idx[r]];
    }
    return out;
}

}  // namespace modforge
