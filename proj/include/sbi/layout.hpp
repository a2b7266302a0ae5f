#pragma once

#include "sbi/types.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

namespace sbi {

// Flat layout of one particle's free parameters: coefficient blocks and
// log-variances in catalog order, then kernel hyperparameters (GP), then
// confounders, then inducing counterfactual outcomes (GP). Both particles
// of a pair share one layout instance.
class ParamLayout {
public:
    struct Block {
        std::string name;
        Eigen::Index offset = 0;
        Eigen::Index size = 0;
    };

    Eigen::Index add(const std::string& name, Eigen::Index size) {
        Block b{name, total_, size};
        blocks_.push_back(b);
        total_ += size;
        return b.offset;
    }

    Eigen::Index total() const { return total_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    bool has(const std::string& name) const {
        for (const auto& b : blocks_)
            if (b.name == name) return true;
        return false;
    }

    const Block& block(const std::string& name) const {
        for (const auto& b : blocks_)
            if (b.name == name) return b;
        throw std::invalid_argument("layout has no block " + name);
    }

    Eigen::VectorBlock<Eigen::VectorXd> seg(Eigen::VectorXd& v, const std::string& name) const {
        const Block& b = block(name);
        return v.segment(b.offset, b.size);
    }

    Eigen::VectorBlock<const Eigen::VectorXd> seg(const Eigen::VectorXd& v,
                                                  const std::string& name) const {
        const Block& b = block(name);
        return v.segment(b.offset, b.size);
    }

private:
    std::vector<Block> blocks_;
    Eigen::Index total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

// A candidate model: flat values plus the layout to address them.
struct ModelState {
    LayoutPtr layout;
    Eigen::VectorXd values;

    explicit ModelState(LayoutPtr l) : layout(std::move(l)), values(Eigen::VectorXd::Zero(layout->total())) {}
    ModelState(LayoutPtr l, Eigen::VectorXd v) : layout(std::move(l)), values(std::move(v)) {}

    auto seg(const std::string& name) { return layout->seg(values, name); }
    auto seg(const std::string& name) const { return layout->seg(values, name); }
    bool has(const std::string& name) const { return layout->has(name); }

    double scalar(const std::string& name) const { return seg(name)[0]; }
};

}  // namespace sbi
