#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "canreveal/can.hpp"
#include "canreveal/error.hpp"
#include "canreveal/imu.hpp"

namespace canreveal {

template <typename Payload>
struct BusMessage {
    std::string topic;
    std::uint64_t seq = 0; ///< per topic, starting at 1
    double t = 0.0;        ///< source timestamp
    std::shared_ptr<const Payload> payload;
};

/// FIFO of messages for one subscriber. Closed once every topic it listens
/// to has been closed.
template <typename Payload>
class Subscription {
public:
    using Message = BusMessage<Payload>;

    explicit Subscription(std::size_t topics) : open_topics_(topics) {}

    /// Blocks until a message is available; nullopt once closed and drained.
    std::optional<Message> pop() {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return !queue_.empty() || open_topics_ == 0 || cancelled_; });
        if (queue_.empty()) return std::nullopt;
        Message m = std::move(queue_.front());
        queue_.pop_front();
        return m;
    }

    template <typename Rep, typename Period>
    std::optional<Message> pop_for(std::chrono::duration<Rep, Period> timeout) {
        std::unique_lock lk(mu_);
        cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || open_topics_ == 0 || cancelled_; });
        if (queue_.empty()) return std::nullopt;
        Message m = std::move(queue_.front());
        queue_.pop_front();
        return m;
    }

    std::optional<Message> try_pop() {
        std::lock_guard lk(mu_);
        if (queue_.empty()) return std::nullopt;
        Message m = std::move(queue_.front());
        queue_.pop_front();
        return m;
    }

    bool closed() const {
        std::lock_guard lk(mu_);
        return (open_topics_ == 0 || cancelled_) && queue_.empty();
    }

    std::size_t size() const {
        std::lock_guard lk(mu_);
        return queue_.size();
    }

    /// Unblocks pop() without waiting for the producers.
    void cancel() {
        {
            std::lock_guard lk(mu_);
            cancelled_ = true;
        }
        cv_.notify_all();
    }

    void deliver(Message m) {
        {
            std::lock_guard lk(mu_);
            queue_.push_back(std::move(m));
        }
        cv_.notify_one();
    }

    void topic_closed() {
        {
            std::lock_guard lk(mu_);
            if (open_topics_ > 0) --open_topics_;
        }
        cv_.notify_all();
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Message> queue_;
    std::size_t open_topics_;
    bool cancelled_ = false;
};

/// In-process publish/subscribe bus. Subscribers see every message published
/// to their topics after they subscribed, in publication order; there is no
/// replay for late joiners. Payloads are immutable once published.
template <typename Payload>
class TopicBus {
public:
    using Message = BusMessage<Payload>;
    using SubscriptionPtr = std::shared_ptr<Subscription<Payload>>;

    SubscriptionPtr subscribe(const std::string& topic) { return subscribe(std::vector{topic}); }

    /// One queue for several topics; relative order across topics follows
    /// publication order.
    SubscriptionPtr subscribe(const std::vector<std::string>& topics) {
        if (topics.empty()) throw DomainError("subscription needs at least one topic");
        for (const auto& t : topics)
            if (t.empty()) throw DomainError("topic name must be non-empty");
        std::lock_guard lk(mu_);
        auto sub = std::make_shared<Subscription<Payload>>(topics.size());
        for (const auto& t : topics) {
            auto& state = topics_[t];
            if (state.closed)
                sub->topic_closed();
            else
                state.subscribers.push_back(sub);
        }
        return sub;
    }

    /// Returns the message's sequence number.
    std::uint64_t publish(const std::string& topic, double t, Payload payload) {
        return publish(topic, t, std::make_shared<const Payload>(std::move(payload)));
    }

    std::uint64_t publish(const std::string& topic, double t, std::shared_ptr<const Payload> payload) {
        std::lock_guard lk(mu_);
        auto& state = topics_[topic];
        if (state.closed) throw DomainError("publish on closed topic '" + topic + "'");
        Message m{topic, ++state.seq, t, std::move(payload)};
        for (auto& s : state.subscribers) s->deliver(m);
        return m.seq;
    }

    /// End of stream for one topic.
    void close(const std::string& topic) {
        std::lock_guard lk(mu_);
        auto& state = topics_[topic];
        if (state.closed) return;
        state.closed = true;
        for (auto& s : state.subscribers) s->topic_closed();
        state.subscribers.clear();
    }

    void close_all() {
        std::lock_guard lk(mu_);
        for (auto& [name, state] : topics_) {
            if (state.closed) continue;
            state.closed = true;
            for (auto& s : state.subscribers) s->topic_closed();
            state.subscribers.clear();
        }
    }

    std::uint64_t published(const std::string& topic) const {
        std::lock_guard lk(mu_);
        auto it = topics_.find(topic);
        return it == topics_.end() ? 0 : it->second.seq;
    }

private:
    struct TopicState {
        std::uint64_t seq = 0;
        bool closed = false;
        std::vector<SubscriptionPtr> subscribers;
    };

    mutable std::mutex mu_;
    std::map<std::string, TopicState> topics_;
};

/// Maps source time onto wall time. speed 0 never waits.
class ReplayClock {
public:
    using WallClock = std::chrono::steady_clock;

    explicit ReplayClock(double speed = 0.0);

    double speed() const noexcept { return speed_; }
    double t_now() const noexcept { return t_now_.load(); }

    /// Waits until source time t is due, then records it as delivered.
    /// Returns false when stopped while waiting.
    bool advance_to(double t);

    /// Wall seconds since the first delivered message.
    double wall_elapsed() const;
    double source_start() const noexcept { return t0_; }

    void stop();
    bool stopped() const noexcept { return stop_.load(); }

private:
    double speed_;
    std::atomic<bool> started_{false};
    double t0_ = 0.0;
    WallClock::time_point wall0_{};
    std::atomic<double> t_now_{-std::numeric_limits<double>::infinity()};
    std::atomic<bool> stop_{false};
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

/// One record of a merged replay: a CAN frame or an IMU sample.
struct ReplayItem {
    double t = 0.0;
    bool is_can = true;
    std::size_t index = 0; ///< into the frames or samples span
};

/// Merged delivery order by (t, topic, seq): "can" sorts before "imu".
std::vector<ReplayItem> merge_order(std::span<const CanFrame> frames,
                                    std::span<const ImuSample> samples);

/// Calls `deliver` for each item in merged order, paced by `clock`. Stops
/// early (returning false) when the clock is stopped.
template <typename Deliver>
bool replay_merged(std::span<const CanFrame> frames, std::span<const ImuSample> samples,
                   ReplayClock& clock, Deliver&& deliver) {
    for (const auto& item : merge_order(frames, samples)) {
        if (!clock.advance_to(item.t)) return false;
        if (item.is_can)
            deliver(frames[item.index]);
        else
            deliver(samples[item.index]);
    }
    return true;
}

} // namespace canreveal
