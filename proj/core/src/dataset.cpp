#include "fvlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fvlab/error.hpp"
#include "fvlab/rng.hpp"

namespace fvlab {

using nlohmann::json;

void RelationDataset::validate() const {
    if (relation_id.empty()) fail(ErrorKind::data, "relation dataset has empty relation id");
    if (pairs.empty()) fail(ErrorKind::data, "relation '" + relation_id + "' has no pairs");
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : pairs) {
        if (p.input.empty()) fail(ErrorKind::data, "relation '" + relation_id + "' has an empty input");
        if (!seen.emplace(p.input, p.output).second) {
            fail(ErrorKind::data, "relation '" + relation_id + "' has duplicate pair '" + p.input +
                                      "' -> '" + p.output + "'");
        }
    }
}

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::data, "malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

std::vector<int> split_sizes(int n, const SplitSpec& spec) {
    const double fsum = spec.extract + spec.finetune + spec.test;
    if (std::abs(fsum - 1.0) > 1e-9) fail(ErrorKind::config, "split fractions must sum to 1");
    // largest-remainder apportionment
    const double want[3] = {spec.extract * n, spec.finetune * n, spec.test * n};
    int sizes[3];
    double rem[3];
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = static_cast<int>(std::floor(want[i]));
        rem[i] = want[i] - sizes[i];
        assigned += sizes[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rem[i] > rem[best]) best = i;
        ++sizes[best];
        rem[best] = -1;
        ++assigned;
    }
    return {sizes[0], sizes[1], sizes[2]};
}

}  // namespace

RelationSplits split_relation(const RelationDataset& ds, const SplitSpec& spec) {
    ds.validate();
    const int n = static_cast<int>(ds.pairs.size());

    std::vector<int> sizes;
    if (ds.family == "semeval") {
        const int ft = 10;
        if (n < ft + 2) fail(ErrorKind::data, "relation '" + ds.relation_id + "' too small for a 10-pair finetune split");
        const int test = std::max(1, static_cast<int>(std::lround(spec.test * (n - ft))));
        sizes = {n - ft - test, ft, test};
    } else {
        sizes = split_sizes(n, spec);
    }
    if (sizes[0] < 1 || sizes[1] < 1 || sizes[2] < 1) {
        fail(ErrorKind::data, "relation '" + ds.relation_id + "' has too few pairs (" + std::to_string(n) +
                                  ") for nonempty splits");
    }

    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(spec.seed, "split:" + ds.relation_id));
    rng.shuffle(order);

    auto subset = [&](int begin, int count, const char* suffix) {
        RelationDataset out;
        out.relation_id = ds.relation_id;
        out.family = ds.family;
        out.relation_type = ds.relation_type;
        out.paradigm_pairs = ds.paradigm_pairs;
        out.pairs.reserve(static_cast<size_t>(count));
        std::vector<int> idx(order.begin() + begin, order.begin() + begin + count);
        std::sort(idx.begin(), idx.end());  // keep file order within each split
        for (int i : idx) out.pairs.push_back(ds.pairs[static_cast<size_t>(i)]);
        (void)suffix;
        return out;
    };

    RelationSplits splits{
        subset(0, sizes[0], "extract"),
        subset(sizes[0], sizes[1], "finetune"),
        subset(sizes[0] + sizes[1], sizes[2], "test"),
    };
    return splits;
}

RelationDataset load_relation_file(const std::string& path) {
    const json j = read_json_file(path);
    if (!j.is_object() || !j.contains("relation") || !j.contains("pairs")) {
        fail(ErrorKind::data, "relation file " + path + " must contain 'relation' and 'pairs'");
    }
    RelationDataset ds;
    ds.relation_id = j.at("relation").get<std::string>();
    ds.family = j.value("family", "simple-task");
    ds.relation_type = j.value("relation_type", "");
    if (!j.at("pairs").is_array()) fail(ErrorKind::data, "relation file " + path + ": 'pairs' must be an array");
    for (const auto& p : j.at("pairs")) {
        if (!p.contains("input") || !p.contains("output"))
            fail(ErrorKind::data, "relation file " + path + ": pair missing 'input'/'output'");
        ds.pairs.push_back({p.at("input").get<std::string>(), p.at("output").get<std::string>()});
    }
    if (j.contains("paradigm")) {
        for (const auto& p : j.at("paradigm"))
            ds.paradigm_pairs.push_back({p.at("input").get<std::string>(), p.at("output").get<std::string>()});
    }
    ds.validate();
    return ds;
}

std::vector<AnalogyProblem> load_analogy_file(const std::string& path) {
    const json j = read_json_file(path);
    if (!j.is_array()) fail(ErrorKind::data, "analogy file " + path + " must be a JSON array");
    std::vector<AnalogyProblem> out;
    for (const auto& e : j) {
        for (const char* key : {"a", "b", "c", "d"}) {
            if (!e.contains(key) || e.at(key).get<std::string>().empty())
                fail(ErrorKind::data, "analogy file " + path + ": item missing term '" + key + "'");
        }
        out.push_back({e.at("a").get<std::string>(), e.at("b").get<std::string>(),
                       e.at("c").get<std::string>(), e.at("d").get<std::string>(), e.value("tag", "")});
    }
    return out;
}

HumanSimilarityMatrix load_human_similarity_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open file: " + path);
    std::vector<std::vector<std::string>> cells;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        if (line.back() == ',') row.push_back("");
        cells.push_back(std::move(row));
    }
    if (cells.size() < 2) fail(ErrorKind::data, "similarity matrix " + path + " has no data rows");

    HumanSimilarityMatrix m;
    const auto& header = cells[0];
    for (size_t c = 1; c < header.size(); ++c) m.labels.push_back(header[c]);
    const size_t n = m.labels.size();
    if (cells.size() - 1 != n)
        fail(ErrorKind::data, "similarity matrix " + path + ": label count does not match row count");

    std::vector<double> raw(n * n, 0.0);
    for (size_t r = 1; r < cells.size(); ++r) {
        const auto& row = cells[r];
        if (row.size() != n + 1)
            fail(ErrorKind::data, "similarity matrix " + path + ": row " + std::to_string(r) + " is not square");
        if (row[0] != m.labels[r - 1])
            fail(ErrorKind::data, "similarity matrix " + path + ": row label '" + row[0] + "' does not match header");
        for (size_t c = 1; c < row.size(); ++c) {
            try {
                raw[(r - 1) * n + (c - 1)] = std::stod(row[c]);
            } catch (const std::exception&) {
                fail(ErrorKind::data, "similarity matrix " + path + ": non-numeric cell '" + row[c] + "'");
            }
        }
    }
    m.values.assign(n * n, 0.0);
    double max_asym = 0.0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            max_asym = std::max(max_asym, std::abs(raw[i * n + j] - raw[j * n + i]));
            m.values[i * n + j] = 0.5 * (raw[i * n + j] + raw[j * n + i]);
        }
        m.values[i * n + i] = 0.0;
    }
    m.max_asymmetry = max_asym;
    return m;
}

void save_relation_file(const std::string& path, const RelationDataset& ds) {
    json j;
    j["relation"] = ds.relation_id;
    j["family"] = ds.family;
    if (!ds.relation_type.empty()) j["relation_type"] = ds.relation_type;
    j["pairs"] = json::array();
    for (const auto& p : ds.pairs) j["pairs"].push_back({{"input", p.input}, {"output", p.output}});
    if (!ds.paradigm_pairs.empty()) {
        j["paradigm"] = json::array();
        for (const auto& p : ds.paradigm_pairs) j["paradigm"].push_back({{"input", p.input}, {"output", p.output}});
    }
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write file: " + path);
    out << j.dump(2) << "\n";
}

void save_analogy_file(const std::string& path, const std::vector<AnalogyProblem>& problems) {
    json j = json::array();
    for (const auto& p : problems) {
        json e = {{"a", p.a}, {"b", p.b}, {"c", p.c}, {"d", p.d}};
        if (!p.tag.empty()) e["tag"] = p.tag;
        j.push_back(e);
    }
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write file: " + path);
    out << j.dump(2) << "\n";
}

void save_similarity_matrix_csv(const std::string& path, const std::vector<std::string>& labels,
                                const std::vector<double>& values) {
    const size_t n = labels.size();
    if (values.size() != n * n) fail(ErrorKind::dimension, "matrix size does not match labels");
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write file: " + path);
    out << "pair";
    for (const auto& l : labels) out << "," << l;
    out << "\n";
    out.precision(17);
    for (size_t i = 0; i < n; ++i) {
        out << labels[i];
        for (size_t j = 0; j < n; ++j) out << "," << values[i * n + j];
        out << "\n";
    }
}

}  // namespace fvlab
