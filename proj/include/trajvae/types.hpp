#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "trajvae/errors.hpp"

namespace trajvae {

// A demonstration: T states and T actions, labeled with the skill it shows.
struct Trajectory {
    Eigen::MatrixXd states;   // T x d_state
    Eigen::MatrixXd actions;  // T x d_action
    std::string skill_id;

    int length() const { return static_cast<int>(states.rows()); }

    void validate() const {
        if (states.rows() < 1) throw InvalidInput("trajectory must have T >= 1");
        if (states.rows() != actions.rows())
            throw InvalidInput("trajectory states/actions row counts differ");
        if (!states.allFinite() || !actions.allFinite())
            throw InvalidInput("trajectory contains non-finite entries");
    }
};

// Declares that a composite skill comprises the listed subskills.
struct CompositionSpec {
    std::string composite_id;
    std::vector<std::string> subskill_ids;

    void validate() const {
        if (subskill_ids.empty())
            throw InvalidInput("composition '" + composite_id + "' has no subskills");
        for (size_t i = 0; i < subskill_ids.size(); ++i)
            for (size_t j = i + 1; j < subskill_ids.size(); ++j)
                if (subskill_ids[i] == subskill_ids[j])
                    throw InvalidInput("composition '" + composite_id + "' lists duplicate subskill '" +
                                       subskill_ids[i] + "'");
    }
};

}  // namespace trajvae
