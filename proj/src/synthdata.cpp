#include "trajvae/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trajvae/rng.hpp"

namespace trajvae {

using nlohmann::json;

VelocityField VelocityField::constant(double vx, double vy) {
    VelocityField f;
    f.kind = Kind::Constant;
    f.vx = vx;
    f.vy = vy;
    return f;
}

VelocityField VelocityField::sinusoid(int axis, double amplitude, double frequency) {
    VelocityField f;
    f.kind = Kind::Sinusoid;
    f.axis = axis;
    f.amplitude = amplitude;
    f.frequency = frequency;
    return f;
}

Eigen::Vector2d VelocityField::eval(int step_index, double dt) const {
    Eigen::Vector2d a = Eigen::Vector2d::Zero();
    if (kind == Kind::Constant) {
        a << vx, vy;
    } else {
        const double time = step_index * dt;
        a[axis] = amplitude * std::sin(2.0 * M_PI * frequency * time);
    }
    return a;
}

void VelocityField::validate() const {
    if (kind == Kind::Constant) {
        if (!std::isfinite(vx) || !std::isfinite(vy))
            throw InvalidInput("constant field parameters must be finite");
    } else {
        if (axis != 0 && axis != 1) throw InvalidInput("sinusoid axis must be x or y");
        if (!std::isfinite(amplitude) || !std::isfinite(frequency))
            throw InvalidInput("sinusoid field parameters must be finite");
    }
}

void DatasetManifest::validate() const {
    sim.validate();
    if (demos_per_skill < 1) throw InvalidInput("demos_per_skill must be >= 1");
    if (subskills.empty()) throw ValidationError("manifest declares no subskills");
    std::set<std::string> ids;
    for (const auto& s : subskills) {
        s.velocity_field.validate();
        if (!ids.insert(s.skill_id).second)
            throw ValidationError("duplicate skill id '" + s.skill_id + "'");
    }
    for (const auto& comp : compositions) {
        comp.validate();
        if (!ids.insert(comp.composite_id).second)
            throw ValidationError("composite id '" + comp.composite_id + "' collides with another skill");
        for (const auto& sub : comp.subskill_ids) {
            bool found = false;
            for (const auto& s : subskills) found |= (s.skill_id == sub);
            if (!found)
                throw ValidationError("composition '" + comp.composite_id +
                                      "' references undeclared subskill '" + sub + "'");
        }
    }
}

const SubskillSpec& DatasetManifest::subskill(const std::string& id) const {
    for (const auto& s : subskills)
        if (s.skill_id == id) return s;
    throw InvalidInput("unknown subskill '" + id + "'");
}

std::vector<const Trajectory*> Dataset::demos_of(const std::string& skill_id) const {
    std::vector<const Trajectory*> out;
    for (const auto& t : trajectories)
        if (t.skill_id == skill_id) out.push_back(&t);
    return out;
}

bool Dataset::is_composite(const std::string& skill_id) const {
    for (const auto& c : manifest.compositions)
        if (c.composite_id == skill_id) return true;
    return false;
}

Trajectory simulate(const PointMassConfig& config, const std::vector<VelocityField>& controller,
                    const Eigen::Vector2d& s_1, std::uint64_t seed) {
    config.validate();
    for (const auto& f : controller) f.validate();
    Rng rng(seed);

    Trajectory traj;
    traj.states.resize(config.T, 2);
    traj.actions.resize(config.T, 2);
    Eigen::Vector2d s = s_1;
    for (int t = 0; t < config.T; ++t) {
        Eigen::Vector2d a = Eigen::Vector2d::Zero();
        for (const auto& f : controller) a += f.eval(t, config.dt);
        if (!a.allFinite())
            throw NumericalError("controller produced a non-finite action at step " +
                                 std::to_string(t));
        traj.states.row(t) = s.transpose();
        traj.actions.row(t) = a.transpose();
        if (t + 1 < config.T) {
            Eigen::Vector2d eps = Eigen::Vector2d::Zero();
            if (config.obs_noise_std > 0.0) {
                eps[0] = config.obs_noise_std * rng.normal();
                eps[1] = config.obs_noise_std * rng.normal();
            }
            s = s + config.dt * a + eps;
        }
    }
    return traj;
}

Dataset generate_dataset(const DatasetManifest& manifest) {
    manifest.validate();
    Dataset ds;
    ds.manifest = manifest;
    int traj_index = 0;
    auto emit = [&](const std::string& skill_id, const std::vector<VelocityField>& fields) {
        for (int d = 0; d < manifest.demos_per_skill; ++d) {
            const std::uint64_t tseed = mix_seed(manifest.seed, static_cast<std::uint64_t>(traj_index));
            Eigen::Vector2d s1 = Eigen::Vector2d::Zero();
            if (manifest.sim.start_box > 0.0) {
                Rng srng(mix_seed(tseed, 1));
                s1[0] = manifest.sim.start_box * (2.0 * srng.uniform() - 1.0);
                s1[1] = manifest.sim.start_box * (2.0 * srng.uniform() - 1.0);
            }
            Trajectory t = simulate(manifest.sim, fields, s1, mix_seed(tseed, 2));
            t.skill_id = skill_id;
            ds.trajectories.push_back(std::move(t));
            ++traj_index;
        }
    };
    for (const auto& s : manifest.subskills) emit(s.skill_id, {s.velocity_field});
    for (const auto& comp : manifest.compositions) {
        std::vector<VelocityField> fields;
        for (const auto& id : comp.subskill_ids) fields.push_back(manifest.subskill(id).velocity_field);
        emit(comp.composite_id, fields);
    }
    return ds;
}

DatasetManifest default_manifest(const std::string& preset) {
    DatasetManifest m;
    m.seed = 0;
    m.demos_per_skill = 10;
    if (preset == "diag_wiggle") {
        m.subskills = {
            {"move_right", VelocityField::constant(0.5, 0.0)},
            {"move_up", VelocityField::constant(0.0, 0.5)},
            {"oscillate_x", VelocityField::sinusoid(0, 0.5, 0.4)},
        };
        m.compositions = {{"diag_wiggle", {"move_right", "move_up", "oscillate_x"}}};
    } else if (preset == "diag") {
        m.subskills = {
            {"move_right", VelocityField::constant(0.5, 0.0)},
            {"move_up", VelocityField::constant(0.0, 0.5)},
        };
        m.compositions = {{"diag", {"move_right", "move_up"}}};
    } else {
        throw InvalidInput("unknown preset '" + preset + "' (expected diag_wiggle or diag)");
    }
    return m;
}

// ----- JSON -----

namespace {

json field_to_json(const VelocityField& f) {
    json j;
    if (f.kind == VelocityField::Kind::Constant) {
        j["type"] = "constant";
        j["vx"] = f.vx;
        j["vy"] = f.vy;
    } else {
        j["type"] = "sinusoid";
        j["axis"] = f.axis == 0 ? "x" : "y";
        j["amplitude"] = f.amplitude;
        j["frequency"] = f.frequency;
    }
    return j;
}

VelocityField field_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "constant")
        return VelocityField::constant(j.at("vx").get<double>(), j.at("vy").get<double>());
    if (type == "sinusoid") {
        const std::string axis = j.at("axis").get<std::string>();
        if (axis != "x" && axis != "y") throw ValidationError("sinusoid axis must be 'x' or 'y'");
        return VelocityField::sinusoid(axis == "x" ? 0 : 1, j.at("amplitude").get<double>(),
                                       j.at("frequency").get<double>());
    }
    throw ValidationError("unknown velocity_field type '" + type + "'");
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["seed"] = m.seed;
    j["demos_per_skill"] = m.demos_per_skill;
    j["sim"] = {{"dt", m.sim.dt},
                {"T", m.sim.T},
                {"obs_noise_std", m.sim.obs_noise_std},
                {"start_box", m.sim.start_box}};
    j["subskills"] = json::array();
    for (const auto& s : m.subskills)
        j["subskills"].push_back({{"skill_id", s.skill_id}, {"velocity_field", field_to_json(s.velocity_field)}});
    j["compositions"] = json::object();
    for (const auto& c : m.compositions) j["compositions"][c.composite_id] = c.subskill_ids;
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
    }
    DatasetManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1)
            throw ValidationError("unsupported manifest format_version");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.demos_per_skill = j.at("demos_per_skill").get<int>();
        if (j.contains("sim")) {
            m.sim.dt = j["sim"].at("dt").get<double>();
            m.sim.T = j["sim"].at("T").get<int>();
            m.sim.obs_noise_std = j["sim"].at("obs_noise_std").get<double>();
            if (j["sim"].contains("start_box"))
                m.sim.start_box = j["sim"]["start_box"].get<double>();
        }
        for (const auto& s : j.at("subskills"))
            m.subskills.push_back(
                {s.at("skill_id").get<std::string>(), field_from_json(s.at("velocity_field"))});
        for (const auto& [key, value] : j.at("compositions").items())
            m.compositions.push_back({key, value.get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    m.validate();
    return m;
}

void write_dataset(const Dataset& dataset, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
        out << manifest_to_json(dataset.manifest);
    }
    std::ofstream out(fs::path(dir) / "dataset.jsonl", std::ios::binary);
    for (const auto& t : dataset.trajectories) {
        json j;
        j["skill"] = t.skill_id;
        json states = json::array();
        for (int i = 0; i < t.states.rows(); ++i)
            states.push_back({t.states(i, 0), t.states(i, 1)});
        json actions = json::array();
        for (int i = 0; i < t.actions.rows(); ++i)
            actions.push_back({t.actions(i, 0), t.actions(i, 1)});
        j["states"] = std::move(states);
        j["actions"] = std::move(actions);
        out << j.dump() << "\n";
    }
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path mpath = fs::path(dir) / "manifest.json";
    const fs::path dpath = fs::path(dir) / "dataset.jsonl";
    if (!fs::exists(mpath) || !fs::exists(dpath))
        throw ValidationError("dataset directory '" + dir + "' is missing manifest.json or dataset.jsonl");

    Dataset ds;
    {
        std::ifstream in(mpath, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        ds.manifest = manifest_from_json(ss.str());
    }
    std::ifstream in(dpath, std::ios::binary);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("dataset.jsonl line " + std::to_string(lineno) +
                                  " is not valid JSON: " + e.what());
        }
        Trajectory t;
        try {
            t.skill_id = j.at("skill").get<std::string>();
            const auto& states = j.at("states");
            const auto& actions = j.at("actions");
            t.states.resize(states.size(), 2);
            t.actions.resize(actions.size(), 2);
            for (size_t i = 0; i < states.size(); ++i) {
                t.states(static_cast<int>(i), 0) = states[i].at(0).get<double>();
                t.states(static_cast<int>(i), 1) = states[i].at(1).get<double>();
            }
            for (size_t i = 0; i < actions.size(); ++i) {
                t.actions(static_cast<int>(i), 0) = actions[i].at(0).get<double>();
                t.actions(static_cast<int>(i), 1) = actions[i].at(1).get<double>();
            }
        } catch (const json::exception& e) {
            throw ValidationError("dataset.jsonl line " + std::to_string(lineno) +
                                  " is malformed: " + e.what());
        }
        t.validate();
        ds.trajectories.push_back(std::move(t));
    }
    return ds;
}

}  // namespace trajvae
