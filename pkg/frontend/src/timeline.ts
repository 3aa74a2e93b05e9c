// Timeline scrubber state: play/pause/seek over a fetched trajectory.

export class Timeline {
    tick: number;
    playing = false;
    private timer: ReturnType<typeof setInterval> | null = null;

    constructor(
        public startTick: number,
        public endTick: number,
        public dt: number,
        private onChange: (tick: number) => void,
    ) {
        this.tick = startTick;
    }

    seconds(tick: number = this.tick): number {
        return tick * this.dt;
    }

    seek(tick: number): void {
        this.tick = Math.min(Math.max(tick, this.startTick), this.endTick);
        this.onChange(this.tick);
    }

    play(rate = 1.0): void {
        if (this.playing) return;
        this.playing = true;
        const stepMs = (this.dt * 1000) / rate;
        this.timer = setInterval(() => {
            if (this.tick >= this.endTick) {
                this.pause();
                return;
            }
            this.seek(this.tick + 1);
        }, stepMs);
    }

    pause(): void {
        this.playing = false;
        if (this.timer !== null) {
            clearInterval(this.timer);
            this.timer = null;
        }
    }

    toggle(): void {
        if (this.playing) this.pause();
        else this.play();
    }
}
